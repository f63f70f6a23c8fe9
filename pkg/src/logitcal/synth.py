"""Seeded synthetic logit dumps with overconfident false positives.

TPs of class ``c`` draw logit ``c`` around ``tp_logit_means[c]`` and the
other logits around ``background_mean``. Each FP picks one class ``j`` at
random whose logit is drawn around ``fp_logit_means[j]`` (spuriously high,
but below the TP level); its other logits sit at the background level.
Objectness is uniform on ``tp_objectness`` / ``fp_objectness``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import DatasetSplit, DetectionRecord, Match, TrainingRecord


@dataclass(frozen=True)
class SyntheticSpec:
    K: int = 3
    n_tp: int = 2400
    n_fp: int = 2400
    n_train: int = 3000
    n_val: int = 600
    tp_logit_means: tuple[float, ...] = (4.0, 4.0, 4.0)
    fp_logit_means: tuple[float, ...] = (1.5, 1.5, 1.5)
    background_mean: float = -3.0
    noise_sigma: float = 0.45
    tp_objectness: tuple[float, float] = (0.9, 1.0)
    fp_objectness: tuple[float, float] = (0.85, 1.0)
    seed: int = 20210
    difficulty_weights: tuple[float, float, float] = field(default=(0.4, 0.35, 0.25))

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        for name in ("n_tp", "n_fp", "n_train", "n_val"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if len(self.tp_logit_means) != self.K or len(self.fp_logit_means) != self.K:
            raise ValueError("tp_logit_means and fp_logit_means need K entries each")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be > 0")
        for lo, hi in (self.tp_objectness, self.fp_objectness):
            if not 0 <= lo <= hi <= 1:
                raise ValueError("objectness ranges must satisfy 0 <= lo <= hi <= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def with_classes(cls, K, **kw):
        """Default spec resized to ``K`` classes."""
        base = cls()
        kw.setdefault("tp_logit_means", (base.tp_logit_means[0],) * K)
        kw.setdefault("fp_logit_means", (base.fp_logit_means[0],) * K)
        return cls(K=K, **kw)


def _tp_logits(rng, spec, classes):
    X = rng.normal(spec.background_mean, spec.noise_sigma, size=(len(classes), spec.K))
    means = np.asarray(spec.tp_logit_means)[classes]
    X[np.arange(len(classes)), classes] = rng.normal(means, spec.noise_sigma)
    return X


def _fp_logits(rng, spec, n):
    spurious = rng.integers(0, spec.K, size=n)
    X = rng.normal(spec.background_mean, spec.noise_sigma, size=(n, spec.K))
    X[np.arange(n), spurious] = rng.normal(np.asarray(spec.fp_logit_means)[spurious], spec.noise_sigma)
    return X


def _detections(rng, spec, n_tp, n_fp, prefix):
    classes = rng.integers(0, spec.K, size=n_tp)
    X_tp = _tp_logits(rng, spec, classes)
    os_tp = rng.uniform(*spec.tp_objectness, size=n_tp)
    tiers = rng.choice(["easy", "moderate", "hard"], size=n_tp,
                       p=np.asarray(spec.difficulty_weights) / sum(spec.difficulty_weights))
    X_fp = _fp_logits(rng, spec, n_fp)
    os_fp = rng.uniform(*spec.fp_objectness, size=n_fp)
    recs = []
    for i in range(n_tp):
        recs.append(DetectionRecord(f"{prefix}{i // 8:06d}", len(recs), tuple(X_tp[i]),
                                    float(os_tp[i]), Match(int(classes[i])), str(tiers[i])))
    for i in range(n_fp):
        recs.append(DetectionRecord(f"{prefix}{(n_tp + i) // 8:06d}", len(recs), tuple(X_fp[i]),
                                    float(os_fp[i]), Match(None), "unknown"))
    # interleave TP and FP rows deterministically
    order = rng.permutation(len(recs))
    return [recs[i] for i in order]


def generate(spec: SyntheticSpec = SyntheticSpec()) -> DatasetSplit:
    """Draw a full train / validation / test split, fully determined by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    classes = rng.integers(0, spec.K, size=spec.n_train)
    X_train = _tp_logits(rng, spec, classes)
    train = [TrainingRecord(tuple(x), int(c)) for x, c in zip(X_train, classes)]
    n_val_tp = spec.n_val // 2
    val = _detections(rng, spec, n_val_tp, spec.n_val - n_val_tp, "v")
    test = _detections(rng, spec, spec.n_tp, spec.n_fp, "t")
    return DatasetSplit(train, val, test)
