"""Prediction layers: sigmoid / temperature softmax baselines and ML / MAP.

The ML and MAP layers return the full normalized class vector; the arg max
is taken by the caller (``predicted_class``). For ML/MAP, SOFTMAX and SG the
final class vector is multiplied by the detector objectness when
``use_objectness`` is on, and the detection confidence is its largest entry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import DetectionRecord, SchemaError, ScoringConfig
from .density import DensityModel, eval_prior, lookup_likelihood

TEMPERATURE_BRACKET = (0.05, 20.0)


class UndefinedScoreError(ArithmeticError):
    """Every smoothed class term is zero, so the normalized score is 0/0."""


class BoundaryWarning(UserWarning):
    pass


def softmax_ts(logits, temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``logits / temperature`` along the last axis."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=float) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    # 1 / (1 + e^-z) without overflow for large |z|
    return np.exp(-np.logaddexp(0.0, -z))


def _normalize(terms):
    total = terms.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        raise UndefinedScoreError("all smoothed class terms are zero; use smoothing > 0")
    return terms / total


def ml_layer(likelihood, smoothing: float) -> np.ndarray:
    """``(L_i + lambda) / sum_k (L_k + lambda)`` along the last axis."""
    if smoothing < 0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")
    L = np.asarray(likelihood, dtype=float)
    return _normalize(L + smoothing)


def map_layer(likelihood, prior, smoothing: float) -> np.ndarray:
    """``(L_i P_i + lambda) / sum_k (L_k P_k + lambda)`` along the last axis."""
    if smoothing < 0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")
    L = np.asarray(likelihood, dtype=float)
    P = np.asarray(prior, dtype=float)
    return _normalize(L * P + smoothing)


def argmax_lowest(scores) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(np.asarray(scores), axis=-1)


@dataclass(frozen=True, eq=False)
class ScoredDetection:
    record: DetectionRecord
    class_scores: np.ndarray
    predicted_class: int
    confidence: float


def class_scores(logits, objectness, cfg: ScoringConfig, model: DensityModel | None = None):
    """Class score matrix for a batch, following ``cfg.method``.

    Returns ``(scores, predicted_class, confidence)``, with ``scores`` already
    multiplied by objectness when ``cfg.use_objectness`` is set.
    """
    X = np.atleast_2d(np.asarray(logits, dtype=float))
    os_ = np.asarray(objectness, dtype=float).reshape(-1)
    if cfg.method in ("ML", "MAP"):
        if model is None:
            raise ValueError(f"method {cfg.method} needs a fitted density model")
        if X.shape[1] != model.K:
            raise SchemaError(f"record has {X.shape[1]} logits but model has K={model.K}")
        L = lookup_likelihood(model, X)
        if cfg.method == "ML":
            S = ml_layer(L, cfg.smoothing)
        else:
            S = map_layer(L, eval_prior(model, X, cfg.prior), cfg.smoothing)
        pred = argmax_lowest(S)
    elif cfg.method == "SOFTMAX":
        S = softmax_ts(X, cfg.temperature)
        pred = argmax_lowest(S)
    else:
        S = sigmoid(X)
        pred = argmax_lowest(X)
    if cfg.use_objectness:
        S = S * os_[:, None]
    conf = S[np.arange(len(S)), pred]
    return S, pred, conf


def score_detection(record: DetectionRecord, model: DensityModel | None,
                    cfg: ScoringConfig) -> ScoredDetection:
    S, pred, conf = class_scores([record.logits], [record.objectness], cfg, model)
    return ScoredDetection(record, S[0], int(pred[0]), float(conf[0]))


def score_records(records: Sequence[DetectionRecord], model: DensityModel | None,
                  cfg: ScoringConfig) -> list[ScoredDetection]:
    """Score a batch in one vectorized pass; output order equals input order."""
    records = list(records)
    if not records:
        return []
    S, pred, conf = class_scores([r.logits for r in records],
                                 [r.objectness for r in records], cfg, model)
    return [ScoredDetection(r, s, int(p), float(c)) for r, s, p, c in zip(records, S, pred, conf)]


# --------------------------------------------------------------------------
# temperature scaling


def nll(logits, labels, temperature: float) -> float:
    """Summed negative log likelihood of ``labels`` under ``softmax(logits / T)``."""
    z = np.atleast_2d(np.asarray(logits, dtype=float)) / temperature
    y = np.asarray(labels, dtype=int)
    zmax = z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    return float(np.sum(log_norm - z[np.arange(len(y)), y]))


def golden_section(f, lo, hi, tol=1e-4, max_iter=200):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns the bracket midpoint."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_temperature_arrays(logits, labels, bracket=TEMPERATURE_BRACKET, tol=1e-4) -> float:
    X = np.atleast_2d(np.asarray(logits, dtype=float))
    y = np.asarray(labels, dtype=int)
    if len(y) == 0:
        raise ValueError("no labelled records to fit a temperature on")
    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    log_t = golden_section(lambda u: nll(X, y, math.exp(u)), lo, hi, tol=tol)
    if log_t - lo <= tol or hi - log_t <= tol:
        warnings.warn(f"fitted temperature {math.exp(log_t):.4g} sits on the search bracket "
                      f"{bracket}; the NLL may be monotone", BoundaryWarning, stacklevel=2)
    return math.exp(log_t)


def fit_temperature(validation: Sequence[DetectionRecord], bracket=TEMPERATURE_BRACKET,
                    tol=1e-4) -> float:
    """Temperature minimizing the NLL of the TP records' matched classes.

    FP records carry no class label and are skipped. The search is a
    golden-section search over log-temperature within ``bracket``.
    """
    tps = [r for r in validation if r.match.is_tp]
    if not tps:
        raise ValueError("validation set has no TP records with class labels")
    return fit_temperature_arrays([r.logits for r in tps], [r.match.cls for r in tps],
                                  bracket=bracket, tol=tol)
