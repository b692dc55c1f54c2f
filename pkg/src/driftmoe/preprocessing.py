"""Online feature standardization with test-then-train semantics."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

STD_FLOOR = 1e-6


class RunningStandardizer(BaseEstimator, TransformerMixin):
    """One-pass per-feature standardizer (Welford recurrence).

    ``standardize`` scales each instance with the statistics accumulated
    BEFORE that instance, then folds the instance in, so a prequential
    consumer never leaks the current instance into its own scaling.  The
    very first instance passes through unscaled; the denominator is floored
    at ``STD_FLOOR`` so constant features map to 0.
    """

    def __init__(self, n_features: int | None = None):
        self.n_features = n_features
        self._reset(n_features)

    def _reset(self, n_features: int | None) -> None:
        self.count_ = 0
        if n_features is not None:
            self.mean_ = np.zeros(n_features)
            self.m2_ = np.zeros(n_features)
        else:
            self.mean_ = None
            self.m2_ = None

    def _ensure(self, d: int) -> None:
        if self.mean_ is None:
            self._reset(d)

    @property
    def variance_(self) -> np.ndarray:
        """Sample variance of the values seen so far (0 before two updates)."""
        if self.count_ < 2:
            return np.zeros_like(self.mean_)
        return self.m2_ / (self.count_ - 1)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        self._ensure(x.shape[-1])
        self.count_ += 1
        delta = x - self.mean_
        self.mean_ += delta / self.count_
        self.m2_ += delta * (x - self.mean_)

    def transform_one(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.count_ == 0:
            return x.copy()
        std = np.sqrt(self.variance_)
        return (x - self.mean_) / np.maximum(std, STD_FLOOR)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        """Scale ``x`` with pre-update statistics, then absorb it."""
        out = self.transform_one(x)
        self.update(x)
        return out

    # sklearn-style batch surface -------------------------------------------------

    def partial_fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        for row in X:
            self.update(row)
        return self

    def fit(self, X, y=None):
        self._reset(None)
        return self.partial_fit(X)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        out = np.stack([self.transform_one(row) for row in X])
        return out[0] if squeeze else out

    def state_dict(self) -> dict:
        return {
            "count": self.count_,
            "mean": None if self.mean_ is None else self.mean_.copy(),
            "m2": None if self.m2_ is None else self.m2_.copy(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.count_ = int(state["count"])
        self.mean_ = None if state["mean"] is None else np.array(state["mean"], dtype=np.float64)
        self.m2_ = None if state["m2"] is None else np.array(state["m2"], dtype=np.float64)
