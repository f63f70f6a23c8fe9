"""Per-class logit densities: normalized histograms and Gaussian priors.

The histogram for class ``c`` is built from the ``c``-th logit of the
training objects whose true class is ``c``; lookups compare test logit
``c`` against histogram ``c`` only. Bins are half-open ``[low, high)``
except the last, which is closed so the training maximum is counted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import TrainingRecord, fmt_float

MODEL_FORMAT = "logitcal-density"
MODEL_VERSION = 1
_TINY = np.finfo(float).tiny


class FitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClassHistogram:
    class_index: int
    edges: np.ndarray  # B + 1 contiguous edges
    freq: np.ndarray   # B normalized frequencies

    @property
    def bin_low(self):
        return self.edges[:-1]

    @property
    def bin_high(self):
        return self.edges[1:]

    @property
    def bins(self):
        return len(self.freq)

    def bin_index(self, x):
        return _bin_index(self.edges, x)

    def lookup(self, x):
        """Frequency of the bin holding ``x`` (0 outside the fitted range)."""
        idx = _bin_index(self.edges, x)
        return np.where(idx >= 0, self.freq[np.clip(idx, 0, None)], 0.0)


@dataclass(frozen=True)
class GaussianPrior:
    class_index: int
    mu: float
    sigma2: float

    def pdf(self, x):
        """Normal density at ``x``, floored at the smallest normal float (never 0)."""
        x = np.asarray(x, dtype=float)
        d = np.exp(-0.5 * (x - self.mu) ** 2 / self.sigma2) / math.sqrt(2.0 * math.pi * self.sigma2)
        return np.maximum(d, _TINY)


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Fitted likelihood/prior pair for ``K`` classes.

    ``shift``/``scale`` hold an optional per-component affine normalization
    (``(x - shift) / scale``) applied identically before fitting and before
    every lookup; identity unless the model was fit with ``normalize=True``.
    """

    histograms: tuple[ClassHistogram, ...]
    priors: tuple[GaussianPrior, ...]
    class_counts: tuple[int, ...]
    shift: tuple[float, ...]
    scale: tuple[float, ...]

    @property
    def K(self):
        return len(self.histograms)

    @property
    def bins(self):
        return self.histograms[0].bins

    def transform(self, logits):
        x = np.asarray(logits, dtype=float)
        if all(s == 0.0 for s in self.shift) and all(s == 1.0 for s in self.scale):
            return x
        return (x - np.asarray(self.shift)) / np.asarray(self.scale)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "K": self.K,
            "bins": self.bins,
            "classes": [
                {
                    "class_index": h.class_index,
                    "count": n,
                    "edges": [float(v) for v in h.edges],
                    "freq": [float(v) for v in h.freq],
                    "mu": p.mu,
                    "sigma2": p.sigma2,
                    "shift": sh,
                    "scale": sc,
                }
                for h, p, n, sh, sc in zip(self.histograms, self.priors, self.class_counts,
                                           self.shift, self.scale)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a density model document (format={d.get('format')!r})")
        if int(d.get("version", 0)) > MODEL_VERSION:
            raise ValueError(f"model version {d['version']} is newer than supported {MODEL_VERSION}")
        classes = sorted(d["classes"], key=lambda c: c["class_index"])
        if len(classes) != d["K"]:
            raise ValueError(f"model declares K={d['K']} but has {len(classes)} classes")
        hists = tuple(ClassHistogram(c["class_index"], np.asarray(c["edges"], float),
                                     np.asarray(c["freq"], float)) for c in classes)
        priors = tuple(GaussianPrior(c["class_index"], float(c["mu"]), float(c["sigma2"]))
                       for c in classes)
        return cls(hists, priors, tuple(int(c["count"]) for c in classes),
                   tuple(float(c.get("shift", 0.0)) for c in classes),
                   tuple(float(c.get("scale", 1.0)) for c in classes))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _bin_index(edges, x):
    """Bin index of each ``x`` under the [low, high) / closed-top rule; -1 outside."""
    x = np.asarray(x, dtype=float)
    n_bins = len(edges) - 1
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.where(x == edges[-1], n_bins - 1, idx)
    return np.where((idx < 0) | (idx >= n_bins), -1, idx)


def fit_histogram(values: Sequence[float], bins: int, class_index: int = 0) -> ClassHistogram:
    """Normalized-frequency histogram with ``bins`` equal-width bins over [min, max].

    All-equal input gets its range widened by ``1e-6 * max(1, |v|)`` on each
    side so the bins keep a positive width.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise FitError(f"class {class_index}: cannot fit a histogram to no values")
    if int(bins) != bins or bins < 1:
        raise FitError(f"bins must be a positive integer, got {bins}")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        pad = 1e-6 * max(1.0, abs(lo))
        lo, hi = lo - pad, hi + pad
    edges = np.linspace(lo, hi, int(bins) + 1)
    idx = _bin_index(edges, v)
    counts = np.bincount(idx, minlength=int(bins)).astype(float)
    return ClassHistogram(class_index, edges, counts / v.size)


def fit_prior(values: Sequence[float], class_index: int = 0) -> GaussianPrior:
    """Gaussian with the sample mean and unbiased (N-1) sample variance."""
    v = np.asarray(values, dtype=float).ravel()
    if np.unique(v).size < 2:
        raise FitError(f"class {class_index}: need at least 2 distinct values to fit a prior")
    var = float(v.var(ddof=1))
    if not (var > 0 and math.isfinite(var)):
        # distinct but tiny values can still underflow to zero variance
        raise FitError(f"class {class_index}: sample variance {var} is not a positive finite number")
    return GaussianPrior(class_index, float(v.mean()), var)


def fit_model(train: Sequence[TrainingRecord], bins: int, K: int | None = None,
              normalize: bool = False) -> DensityModel:
    """Fit one histogram and one Gaussian per class from training logits."""
    train = list(train)
    if not train and K is None:
        raise FitError("no training records")
    K = K if K is not None else len(train[0].logits)
    X = np.asarray([r.logits for r in train], dtype=float).reshape(-1, K)
    y = np.asarray([r.true_class for r in train], dtype=int)
    return fit_model_arrays(X, y, bins, normalize=normalize)


def fit_model_arrays(X, y, bins, normalize=False) -> DensityModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    K = X.shape[1]
    if normalize:
        shift = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        Xn = (X - shift) / scale
    else:
        shift, scale = np.zeros(K), np.ones(K)
        Xn = X
    hists, priors, counts = [], [], []
    for c in range(K):
        vals = Xn[y == c, c]
        if vals.size < 2:
            raise FitError(f"class {c}: need at least 2 training records, got {vals.size}")
        hists.append(fit_histogram(vals, bins, class_index=c))
        priors.append(fit_prior(vals, class_index=c))
        counts.append(int(vals.size))
    return DensityModel(tuple(hists), tuple(priors), tuple(counts),
                        tuple(float(s) for s in shift), tuple(float(s) for s in scale))


def lookup_likelihood(model: DensityModel, logits) -> np.ndarray:
    """Per-class likelihoods for one ``(K,)`` vector or a batch ``(n, K)``."""
    x = model.transform(logits)
    if x.shape[-1] != model.K:
        raise ValueError(f"expected {model.K} logits, got {x.shape[-1]}")
    out = np.empty(x.shape, dtype=float)
    for c, h in enumerate(model.histograms):
        out[..., c] = h.lookup(x[..., c])
    return out


def eval_prior(model: DensityModel, logits, kind: str = "gaussian") -> np.ndarray:
    """Per-class prior term.

    ``"gaussian"`` evaluates class ``c``'s normal density at logit ``c`` (a
    density, so values may exceed 1); ``"frequency"`` returns the training
    class frequency broadcast to the input shape.
    """
    x = model.transform(logits)
    if x.shape[-1] != model.K:
        raise ValueError(f"expected {model.K} logits, got {x.shape[-1]}")
    if kind == "frequency":
        counts = np.asarray(model.class_counts, dtype=float)
        return np.broadcast_to(counts / counts.sum(), x.shape).copy()
    if kind != "gaussian":
        raise ValueError(f"unknown prior kind {kind!r}")
    out = np.empty(x.shape, dtype=float)
    for c, p in enumerate(model.priors):
        out[..., c] = p.pdf(x[..., c])
    return out


def model_summary(model: DensityModel):
    """Short human-readable description, one line per class."""
    lines = []
    for h, p, n in zip(model.histograms, model.priors, model.class_counts):
        lines.append(f"class {h.class_index}: n={n} range=[{fmt_float(h.edges[0])}, "
                     f"{fmt_float(h.edges[-1])}] mu={fmt_float(p.mu)} sigma2={fmt_float(p.sigma2)}")
    return "\n".join(lines)
