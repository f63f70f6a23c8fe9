"""Post-hoc ML/MAP rescoring of detector logits, calibration metrics and
LiDAR range/reflectance map generation."""

__version__ = "0.1.0"

from .datamodel import (DatasetSplit, DetectionRecord, Match, ScoringConfig, TrainingRecord,
                        load_dump, read_dump, validate_split, write_dump)
from .density import (DensityModel, FitError, eval_prior, fit_histogram, fit_model, fit_prior,
                      lookup_likelihood)
from .estimators import LogitBayesClassifier, TemperatureScaler
from .metrics import auc, ece, evaluate, pr_curve, score_stats, sweep
from .scoring import (fit_temperature, map_layer, ml_layer, score_detection, score_records,
                      sigmoid, softmax_ts)

__all__ = [
    "DatasetSplit", "DetectionRecord", "Match", "ScoringConfig", "TrainingRecord",
    "load_dump", "read_dump", "validate_split", "write_dump",
    "DensityModel", "FitError", "eval_prior", "fit_histogram", "fit_model", "fit_prior",
    "lookup_likelihood", "LogitBayesClassifier", "TemperatureScaler",
    "auc", "ece", "evaluate", "pr_curve", "score_stats", "sweep",
    "fit_temperature", "map_layer", "ml_layer", "score_detection", "score_records",
    "sigmoid", "softmax_ts",
]
