"""Calibration and detection metrics.

ECE bins are the half-open intervals ``((m-1)/M, m/M]``; a confidence of
exactly 0 is placed in the first bin. Precision-recall curves are exact
over every distinct score threshold (no interpolation), and AUC is the
trapezoid rule over recall with the first precision value held back to
recall 0.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datamodel import DatasetSplit, DetectionRecord, ScoringConfig
from .density import fit_model
from .scoring import ScoredDetection, score_records


@dataclass(frozen=True)
class ReliabilityBin:
    index: int
    low: float
    high: float
    count: int
    accuracy: float
    confidence: float


def _check_conf(confidences, correct):
    conf = np.asarray(confidences, dtype=float).ravel()
    corr = np.asarray(correct, dtype=bool).ravel()
    if conf.size == 0:
        raise ValueError("ECE needs at least one prediction")
    if conf.size != corr.size:
        raise ValueError(f"{conf.size} confidences but {corr.size} correctness flags")
    if np.any(~np.isfinite(conf)) or np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    return conf, corr


def _ece_bin_index(conf, M):
    edges = np.arange(M + 1) / M
    # edges[m-1] < c <= edges[m]  ->  m ; c == 0 -> 1
    return np.maximum(np.searchsorted(edges, conf, side="left"), 1)


def reliability_bins(confidences, correct, M: int = 10) -> list[ReliabilityBin]:
    conf, corr = _check_conf(confidences, correct)
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    m = _ece_bin_index(conf, M)
    counts = np.bincount(m, minlength=M + 1)[1:]
    conf_sum = np.bincount(m, weights=conf, minlength=M + 1)[1:]
    acc_sum = np.bincount(m, weights=corr.astype(float), minlength=M + 1)[1:]
    out = []
    for i in range(M):
        n = int(counts[i])
        out.append(ReliabilityBin(i + 1, i / M, (i + 1) / M, n,
                                  acc_sum[i] / n if n else 0.0,
                                  conf_sum[i] / n if n else 0.0))
    return out


def ece(confidences, correct, M: int = 10) -> float:
    """Expected calibration error: count-weighted mean of |acc - conf| per bin."""
    bins = reliability_bins(confidences, correct, M)
    n = sum(b.count for b in bins)
    return float(sum(b.count / n * abs(b.accuracy - b.confidence) for b in bins if b.count))


# --------------------------------------------------------------------------
# precision / recall


@dataclass(frozen=True)
class PrCurve:
    class_index: int | None
    difficulty: str
    points: tuple[tuple[float, float], ...]  # (recall, precision)
    auc: float
    n_positive: int = 0
    diagnostic: str | None = None


def pr_points(scores, hits, n_positive=None) -> list[tuple[float, float]]:
    """(recall, precision) after each distinct threshold, highest first.

    ``n_positive`` defaults to the number of hits; it may be larger when
    some ground-truth positives were never scored for this curve.
    """
    s = np.asarray(scores, dtype=float)
    h = np.asarray(hits, dtype=bool)
    if n_positive is None:
        n_positive = int(h.sum())
    if n_positive <= 0 or s.size == 0:
        return []
    order = np.argsort(-s, kind="stable")
    s, h = s[order], h[order]
    tp = np.cumsum(h)
    fp = np.cumsum(~h)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    return [(float(tp[i] / n_positive), float(tp[i] / (tp[i] + fp[i]))) for i in ends]


def auc(curve: PrCurve | Sequence[tuple[float, float]]) -> float:
    pts = curve.points if isinstance(curve, PrCurve) else list(curve)
    if not pts:
        return 0.0
    r = np.array([0.0] + [p[0] for p in pts])
    p = np.array([pts[0][1]] + [q[1] for q in pts])
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def _in_tier(rec: DetectionRecord, difficulty):
    if difficulty in (None, "all"):
        return True
    # FPs match no ground-truth object, so they have no tier of their own
    return rec.difficulty == difficulty or (not rec.match.is_tp and rec.difficulty == "unknown")


def pr_curve(scored: Sequence[ScoredDetection], class_index: int,
             difficulty: str | None = None) -> PrCurve:
    """Exact precision-recall curve for one class and difficulty tier.

    Detections predicted as ``class_index`` are ranked by confidence; a hit
    is a TP matched to that class. Recall is relative to every TP of the
    class in the tier, including ones predicted as another class.
    """
    tier = difficulty or "all"
    pool = [s for s in scored if _in_tier(s.record, difficulty)]
    if not pool:
        raise ValueError(f"no detections left for class {class_index}, difficulty {tier}")
    n_pos = sum(1 for s in pool if s.record.match.cls == class_index)
    if n_pos == 0:
        return PrCurve(class_index, tier, (), 0.0, 0,
                       diagnostic=f"empty curve: no TP of class {class_index} in tier {tier}")
    mine = [s for s in pool if s.predicted_class == class_index]
    pts = tuple(pr_points([s.confidence for s in mine],
                          [s.record.match.cls == class_index for s in mine], n_pos))
    return PrCurve(class_index, tier, pts, auc(pts), n_pos)


# --------------------------------------------------------------------------
# score statistics


@dataclass(frozen=True)
class ScoreStats:
    population: str
    count: int
    mean: float
    variance: float
    diagnostic: str | None = None


def score_stats(scored: Sequence[ScoredDetection], population: str) -> ScoreStats:
    """Mean and population (N-denominator) variance of TP or FP confidences."""
    population = population.upper()
    if population not in ("TP", "FP"):
        raise ValueError(f"population must be TP or FP, got {population!r}")
    want_tp = population == "TP"
    vals = np.array([s.confidence for s in scored if s.record.match.is_tp == want_tp])
    if vals.size == 0:
        return ScoreStats(population, 0, math.nan, math.nan,
                          diagnostic=f"empty {population} population")
    return ScoreStats(population, int(vals.size), float(vals.mean()), float(vals.var()))


def correctness(scored: Sequence[ScoredDetection]) -> np.ndarray:
    """A detection is correct when it is a TP and its predicted class matches."""
    return np.array([s.record.match.cls == s.predicted_class for s in scored], dtype=bool)


# --------------------------------------------------------------------------
# evaluation bundle and sweep


@dataclass
class EvalReport:
    method: str
    ece: float
    curves: list[PrCurve] = field(default_factory=list)
    stats: dict[str, ScoreStats] = field(default_factory=dict)
    reliability: list[ReliabilityBin] = field(default_factory=list)

    def mean_auc(self, difficulty="all"):
        vals = [c.auc for c in self.curves if c.difficulty == difficulty and c.diagnostic is None]
        return float(np.mean(vals)) if vals else math.nan


def tiers_present(records: Sequence[DetectionRecord]) -> list[str]:
    present = {r.difficulty for r in records if r.match.is_tp}
    return ["all"] + [d for d in ("easy", "moderate", "hard") if d in present]


def evaluate(scored: Sequence[ScoredDetection], method: str, K: int, M: int = 10,
             difficulties: Sequence[str] | None = None) -> EvalReport:
    scored = list(scored)
    conf = np.array([s.confidence for s in scored])
    corr = correctness(scored)
    rel = reliability_bins(conf, corr, M)
    n = len(scored)
    e = float(sum(b.count / n * abs(b.accuracy - b.confidence) for b in rel if b.count))
    if difficulties is None:
        difficulties = tiers_present([s.record for s in scored])
    curves = [pr_curve(scored, c, d) for d in difficulties for c in range(K)]
    stats = {p: score_stats(scored, p) for p in ("TP", "FP")}
    return EvalReport(method, e, curves, stats, rel)


@dataclass(frozen=True)
class SweepRow:
    smoothing: float
    bins: int
    ece: float
    mean_auc: float
    error: str | None = None


def sweep(split: DatasetSplit, lambdas: Sequence[float], bins_list: Sequence[int],
          method: str = "ML", M: int = 10, use_objectness: bool = True,
          prior: str = "gaussian", n_jobs: int = 1) -> list[SweepRow]:
    """Grid over (smoothing, bins); each cell is an independent fit + score + eval.

    Rows come back in grid order (smoothing outer, bins inner). A cell that
    fails to fit is reported with its error and NaN metrics.
    """
    if not lambdas or not bins_list:
        raise ValueError("sweep grids must be non-empty")
    if not split.test:
        raise ValueError("sweep needs a non-empty test split")
    K = split.K
    grid = list(itertools.product(lambdas, bins_list))

    def cell(args):
        lam, b = args
        try:
            cfg = ScoringConfig(method=method, smoothing=lam, bins=b,
                                use_objectness=use_objectness, prior=prior)
            model = fit_model(split.train, b, K=K) if cfg.method in ("ML", "MAP") else None
            rep = evaluate(score_records(split.test, model, cfg), cfg.method, K, M, ["all"])
            return SweepRow(float(lam), int(b), rep.ece, rep.mean_auc())
        except (ValueError, ArithmeticError) as exc:
            return SweepRow(float(lam), int(b), math.nan, math.nan, f"{type(exc).__name__}: {exc}")

    if n_jobs == 1:
        return [cell(g) for g in grid]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(cell, grid))
