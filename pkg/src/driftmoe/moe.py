"""Mixture-of-experts stream classifier with a co-trained neural router.

Two variants share one training loop:

* data mode: ``n_experts`` multiclass Hoeffding trees; per instance the
  ``top_k`` experts by gating weight train on the true label.
* task mode: one binary one-vs-rest tree per class (the expert pool size is
  forced to the class count); every expert trains on its indicator label.

Each instance is predicted before any update (test-then-train).  The router
sees the multi-hot mask of experts that were correct under their pre-update
state; when no expert is correct the true class's expert (task mode) or the
top-weighted expert (data mode) is reinforced so the mask is never all-zero.
Prediction follows the top-1 rule: the highest-weighted expert answers.
"""

from __future__ import annotations

import pickle
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .preprocessing import RunningStandardizer
from .router import BatchBuffer, MLPRouter, softmax_gate
from .streams import StreamSchema, numeric_schema
from .tree import BinaryTaskTree, HoeffdingTreeClassifier

CHECKPOINT_FORMAT = "driftmoe-checkpoint"
CHECKPOINT_VERSION = 1

DATA_MODE = "data"
TASK_MODE = "task"


class RoutedPrediction(NamedTuple):
    y_pred: int
    expert_index: int
    weights: np.ndarray


class TrainOutcome(NamedTuple):
    y_pred: int
    expert_index: int
    weights: np.ndarray
    mask: np.ndarray
    router_stepped: bool


class DriftMoEClassifier(BaseEstimator, ClassifierMixin):
    """Online mixture of Hoeffding-tree experts gated by an MLP router.

    Parameters mirror the streaming setup: tree hyperparameters apply to
    every expert, router hyperparameters to the gating MLP.  ``seed`` fixes
    the router initialisation; training itself is deterministic, so a fixed
    (seed, instance sequence) pair reproduces the model exactly.
    """

    def __init__(
        self,
        mode: str = DATA_MODE,
        n_experts: int = 12,
        top_k: int = 3,
        hidden: tuple[int, int] = (128, 128),
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        grace_period: int = 50,
        split_confidence: float = 1e-7,
        tie_threshold: float = 0.05,
        max_depth: Optional[int] = None,
        standardize_inputs: bool = True,
        reuse_prediction_logits: bool = False,
        seed: int = 1,
    ):
        self.mode = mode
        self.n_experts = n_experts
        self.top_k = top_k
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.grace_period = grace_period
        self.split_confidence = split_confidence
        self.tie_threshold = tie_threshold
        self.max_depth = max_depth
        self.standardize_inputs = standardize_inputs
        self.reuse_prediction_logits = reuse_prediction_logits
        self.seed = seed

    # -- construction ------------------------------------------------------------------

    def initialize(self, schema: StreamSchema) -> "DriftMoEClassifier":
        if self.mode not in (DATA_MODE, TASK_MODE):
            raise ValueError(f"mode must be 'data' or 'task', got {self.mode!r}")
        tree_params = dict(
            grace_period=self.grace_period,
            split_confidence=self.split_confidence,
            tie_threshold=self.tie_threshold,
            max_depth=self.max_depth,
        )
        if self.mode == TASK_MODE:
            k_experts = schema.num_classes
            self.experts_ = [
                BinaryTaskTree(i, schema, **tree_params) for i in range(k_experts)
            ]
        else:
            k_experts = self.n_experts
            if not 1 <= self.top_k <= k_experts:
                raise ValueError(
                    f"top_k must be in [1, {k_experts}], got {self.top_k}"
                )
            self.experts_ = [
                HoeffdingTreeClassifier(**tree_params).initialize(schema)
                for _ in range(k_experts)
            ]
        self.schema_ = schema
        self.n_experts_ = k_experts
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([int(self.seed), 1]))
        )
        self.router_ = MLPRouter(
            schema.num_features,
            k_experts,
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            rng=rng,
        )
        self.buffer_ = BatchBuffer(
            self.router_,
            capacity=self.batch_size,
            reuse_prediction_logits=self.reuse_prediction_logits,
        )
        self.standardizer_ = (
            RunningStandardizer(schema.num_features) if self.standardize_inputs else None
        )
        self.classes_ = np.arange(schema.num_classes)
        self.t_ = 0
        return self

    @property
    def is_initialized(self) -> bool:
        return hasattr(self, "experts_")

    def _router_input(self, x: np.ndarray) -> np.ndarray:
        if self.standardizer_ is None:
            return x
        return self.standardizer_.transform_one(x)

    # -- prediction ----------------------------------------------------------------------

    def route_one(self, x: np.ndarray) -> RoutedPrediction:
        """Top-1 prediction: gate, pick the heaviest expert, let it answer."""
        xs = self._router_input(x)
        w = softmax_gate(self.router_.forward_one(xs))
        istar = int(np.argmax(w))
        if self.mode == TASK_MODE:
            y_pred = istar
        else:
            y_pred = int(np.argmax(self.experts_[istar].log_votes_one(x)))
        return RoutedPrediction(y_pred, istar, w)

    def predict_one(self, x: np.ndarray) -> int:
        return self.route_one(x).y_pred

    def predict_proba_one(self, x: np.ndarray) -> np.ndarray:
        """Class distribution of the selected expert.

        In task mode this is the per-class experts' positive probabilities
        renormalized; the evaluation rule itself never uses it.
        """
        xs = self._router_input(x)
        w = softmax_gate(self.router_.forward_one(xs))
        istar = int(np.argmax(w))
        if self.mode == TASK_MODE:
            p = np.array([e.positive_probability(x) for e in self.experts_])
            total = p.sum()
            return p / total if total > 0 else np.full(len(p), 1.0 / len(p))
        return self.experts_[istar].predict_proba_one(x)

    # -- training --------------------------------------------------------------------------

    def learn_one(self, x: np.ndarray, y: int) -> TrainOutcome:
        """One test-then-train step; the returned prediction pre-dates all updates."""
        xs = self._router_input(x)
        logits = self.router_.forward_one(xs)
        w = softmax_gate(logits)
        istar = int(np.argmax(w))
        K = self.n_experts_

        if self.mode == TASK_MODE:
            y_pred = istar
            # a one-vs-rest expert asserts a class only when it fires positive,
            # so expert i can only be correct on instances of its own class
            mask = np.zeros(K)
            if self.experts_[y].predicts_positive(x):
                mask[y] = 1.0
        else:
            preds = np.empty(K, dtype=np.intp)
            for i, expert in enumerate(self.experts_):
                preds[i] = np.argmax(expert.log_votes_one(x))
            y_pred = int(preds[istar])
            mask = (preds == y).astype(np.float64)

        if not mask.any():
            mask[y if self.mode == TASK_MODE else istar] = 1.0

        if self.mode == TASK_MODE:
            for expert in self.experts_:
                expert.learn_one(x, y)
        else:
            chosen = np.argsort(-w, kind="stable")[: self.top_k]
            for i in chosen:
                self.experts_[i].learn_one(x, y)

        stepped = self.buffer_.observe(xs, mask, logits=logits)
        if self.standardizer_ is not None:
            self.standardizer_.update(x)
        self.t_ += 1
        return TrainOutcome(y_pred, istar, w, mask, stepped)

    def finalize(self) -> None:
        """Flush the residual router batch (call at end of stream)."""
        self.buffer_.flush()

    # -- sklearn-style batch surface ----------------------------------------------------------

    def partial_fit(self, X, y, classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if not self.is_initialized:
            if classes is None:
                raise ValueError("pass classes= on the first partial_fit call")
            self.initialize(numeric_schema(X.shape[1], len(classes)))
        for xi, yi in zip(X, y):
            self.learn_one(xi, int(yi))
        return self

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.int64)
        return self.partial_fit(X, y, classes=np.unique(y))

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.predict_one(x) for x in X], dtype=np.int64)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.predict_proba_one(x) for x in X])

    # -- checkpointing ---------------------------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Single-file container: config, router + Adam state, experts, scaler."""
        if not self.is_initialized:
            raise ValueError("cannot checkpoint an uninitialized model")
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "params": self.get_params(),
            "schema": self.schema_,
            "router": {
                "params": self.router_.params,
                "adam_m": self.router_.adam_m,
                "adam_v": self.router_.adam_v,
                "adam_t": self.router_.adam_t,
            },
            "experts": self.experts_,
            "standardizer": None
            if self.standardizer_ is None
            else self.standardizer_.state_dict(),
            "buffer": {
                "X": self.buffer_._X[: self.buffer_.size].copy(),
                "masks": self.buffer_._masks[: self.buffer_.size].copy(),
                "logits": self.buffer_._logits[: self.buffer_.size].copy(),
                "updates": self.buffer_.updates,
            },
            "t": self.t_,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def load_checkpoint(cls, path) -> "DriftMoEClassifier":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a model checkpoint file")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        model = cls(**payload["params"])
        model.initialize(payload["schema"])
        model.router_.params = payload["router"]["params"]
        model.router_.adam_m = payload["router"]["adam_m"]
        model.router_.adam_v = payload["router"]["adam_v"]
        model.router_.adam_t = payload["router"]["adam_t"]
        model.experts_ = payload["experts"]
        if payload["standardizer"] is not None:
            model.standardizer_.load_state_dict(payload["standardizer"])
        buf = payload["buffer"]
        n = len(buf["masks"])
        model.buffer_._X[:n] = buf["X"]
        model.buffer_._masks[:n] = buf["masks"]
        model.buffer_._logits[:n] = buf["logits"]
        model.buffer_.size = n
        model.buffer_.updates = buf["updates"]
        model.t_ = payload["t"]
        return model
