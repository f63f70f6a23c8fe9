"""scikit-learn compatible wrappers.

:class:`LogitBayesClassifier` fits the per-class logit densities on training
logits and exposes the ML or MAP layer through ``predict_proba``;
:class:`TemperatureScaler` fits a softmax temperature by NLL. Both take a
plain ``(n_samples, K)`` logit matrix, so they drop into pipelines and
model-selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .density import eval_prior, fit_model_arrays, lookup_likelihood
from .scoring import fit_temperature_arrays, map_layer, ml_layer, softmax_ts


def _check_labels(y, K):
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise ValueError("labels must be integer class indices matching logit columns")
        y = y.astype(int)
    if y.size and (y.min() < 0 or y.max() >= K):
        raise ValueError(f"labels must lie in [0, {K}) to index logit columns")
    return y


def _check_objectness(objectness, n):
    if objectness is None:
        return np.ones(n)
    os_ = np.asarray(objectness, dtype=float).reshape(-1)
    if os_.shape[0] != n:
        raise ValueError(f"got {os_.shape[0]} objectness scores for {n} samples")
    if np.any((os_ < 0) | (os_ > 1)):
        raise ValueError("objectness must lie in [0, 1]")
    return os_


class LogitBayesClassifier(ClassifierMixin, BaseEstimator):
    """ML / MAP prediction layer over detector logits.

    Parameters
    ----------
    method : {"ml", "map"}, default="ml"
        ``"ml"`` normalizes smoothed histogram likelihoods; ``"map"``
        multiplies them by the per-class prior before smoothing.
    smoothing : float, default=1.6e-6
        Additive smoothing added to every class term.
    bins : int, default=22
        Histogram bins per class.
    prior : {"gaussian", "frequency"}, default="gaussian"
        MAP prior: Gaussian density at the test logit, or class frequency.
    normalize : bool, default=False
        Standardize each logit column (fit-time mean/std) before binning.

    Attributes
    ----------
    model_ : DensityModel
    classes_ : ndarray of shape (K,)
    n_features_in_ : int
    """

    def __init__(self, method="ml", smoothing=1.6e-6, bins=22, prior="gaussian",
                 normalize=False):
        self.method = method
        self.smoothing = smoothing
        self.bins = bins
        self.prior = prior
        self.normalize = normalize

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_features=2)
        if self.method not in ("ml", "map"):
            raise ValueError(f"method must be 'ml' or 'map', got {self.method!r}")
        if self.smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {self.smoothing}")
        y = _check_labels(y, X.shape[1])
        self.model_ = fit_model_arrays(X, y, self.bins, normalize=self.normalize)
        self.classes_ = np.arange(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} logit columns, model was fit with "
                             f"{self.n_features_in_}")
        return X

    def predict_proba(self, X):
        """Normalized ML/MAP class scores, rows summing to one."""
        X = self._check(X)
        L = lookup_likelihood(self.model_, X)
        if self.method == "ml":
            return ml_layer(L, self.smoothing)
        return map_layer(L, eval_prior(self.model_, X, self.prior), self.smoothing)

    def predict(self, X):
        P = self.predict_proba(X)
        return self.classes_[np.argmax(P, axis=1)]

    def confidence(self, X, objectness=None):
        """Detection confidence: top class score times objectness."""
        P = self.predict_proba(X)
        return P.max(axis=1) * _check_objectness(objectness, len(P))


class TemperatureScaler(TransformerMixin, BaseEstimator):
    """Softmax with a temperature fitted by NLL on held-out logits.

    Parameters
    ----------
    bracket : tuple of float, default=(0.05, 20.0)
        Search interval for the temperature.
    tol : float, default=1e-4
        Golden-section tolerance on log-temperature.
    """

    def __init__(self, bracket=(0.05, 20.0), tol=1e-4):
        self.bracket = bracket
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_features=2)
        y = _check_labels(y, X.shape[1])
        self.temperature_ = fit_temperature_arrays(X, y, bracket=self.bracket, tol=self.tol)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "temperature_")
        return softmax_ts(check_array(X), self.temperature_)

    predict_proba = transform

    def predict(self, X):
        return np.argmax(self.transform(X), axis=1)
