"""Neural gating network: a three-layer MLP trained on correctness masks.

The router maps an input vector to one logit per expert.  Gating weights are
the softmax of the logits; training minimizes a sigmoid binary
cross-entropy between the logits and the multi-hot mask of experts that
classified the instance correctly, accumulated into mini-batches and
stepped with Adam.  Softmax in the gate and sigmoid in the loss are both
intentional: the gate ranks experts, the loss scores each independently.
"""

from __future__ import annotations

import struct
from typing import Optional

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
SNAPSHOT_MAGIC = b"MLPS"
SNAPSHOT_VERSION = 1


def softmax_gate(logits: np.ndarray) -> np.ndarray:
    """Order-preserving softmax along the last axis, stable under large logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bce_with_logits(logits: np.ndarray, masks: np.ndarray) -> float:
    """Mean-over-batch, sum-over-experts sigmoid cross-entropy.

    Evaluated in the logits form max(o,0) - o*m + log(1 + exp(-|o|)) which is
    finite for any o.
    """
    logits = np.atleast_2d(logits)
    masks = np.atleast_2d(masks)
    per = np.maximum(logits, 0.0) - logits * masks + np.log1p(np.exp(-np.abs(logits)))
    return float(per.sum(axis=1).mean())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MLPRouter:
    """Three-layer ReLU MLP with per-parameter Adam state.

    Weights start He-uniform (limit sqrt(6 / fan_in)) from the supplied
    generator; biases start at zero.
    """

    def __init__(
        self,
        n_inputs: int,
        n_experts: int,
        hidden: tuple[int, int] = (128, 128),
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        rng: Optional[np.random.Generator] = None,
    ):
        self.n_inputs = n_inputs
        self.n_experts = n_experts
        self.hidden = tuple(hidden)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_epsilon = adam_epsilon
        rng = rng if rng is not None else np.random.default_rng(0)
        h1, h2 = self.hidden

        def he_uniform(fan_out, fan_in):
            limit = np.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, (fan_out, fan_in))

        self.params = {
            "W1": he_uniform(h1, n_inputs),
            "b1": np.zeros(h1),
            "W2": he_uniform(h2, h1),
            "b2": np.zeros(h2),
            "W3": he_uniform(n_experts, h2),
            "b3": np.zeros(n_experts),
        }
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_t = 0

    # -- forward / backward ----------------------------------------------------------

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, dict]:
        """Batch logits (N, K) plus the activation cache for backward."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not np.all(np.isfinite(X)):
            raise ValueError("router input must be finite")
        p = self.params
        Z1 = X @ p["W1"].T + p["b1"]
        A1 = np.maximum(Z1, 0.0)
        Z2 = A1 @ p["W2"].T + p["b2"]
        A2 = np.maximum(Z2, 0.0)
        logits = A2 @ p["W3"].T + p["b3"]
        return logits, {"X": X, "Z1": Z1, "A1": A1, "Z2": Z2, "A2": A2}

    def forward_one(self, x: np.ndarray) -> np.ndarray:
        """Single-instance logits without building a cache (hot path)."""
        p = self.params
        a1 = p["W1"] @ x + p["b1"]
        np.maximum(a1, 0.0, out=a1)
        a2 = p["W2"] @ a1 + p["b2"]
        np.maximum(a2, 0.0, out=a2)
        return p["W3"] @ a2 + p["b3"]

    def backward(self, cache: dict, masks: np.ndarray,
                 logits: Optional[np.ndarray] = None) -> dict:
        """Exact gradient of ``bce_with_logits`` w.r.t. every parameter.

        ``logits`` defaults to the cache's forward output; passing stored
        prediction-time logits gives the stale-logit ablation variant.
        """
        p = self.params
        masks = np.atleast_2d(masks)
        B = masks.shape[0]
        if logits is None:
            logits = cache["A2"] @ p["W3"].T + p["b3"]
        dO = (_sigmoid(logits) - masks) / B  # (B, K)
        grads = {
            "W3": dO.T @ cache["A2"],
            "b3": dO.sum(axis=0),
        }
        dA2 = dO @ p["W3"]
        dZ2 = dA2 * (cache["Z2"] > 0.0)
        grads["W2"] = dZ2.T @ cache["A1"]
        grads["b2"] = dZ2.sum(axis=0)
        dA1 = dZ2 @ p["W2"]
        dZ1 = dA1 * (cache["Z1"] > 0.0)
        grads["W1"] = dZ1.T @ cache["X"]
        grads["b1"] = dZ1.sum(axis=0)
        return grads

    def adam_step(self, grads: dict) -> None:
        """Bias-corrected Adam update; rejects non-finite gradients."""
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient; update rejected")
        self.adam_t += 1
        t = self.adam_t
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**t
        corr2 = 1.0 - b2**t
        for k, g in grads.items():
            m = self.adam_m[k]
            v = self.adam_v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            self.params[k] -= self.learning_rate * (m / corr1) / (
                np.sqrt(v / corr2) + self.adam_epsilon
            )

    def train_batch(self, X: np.ndarray, masks: np.ndarray,
                    stale_logits: Optional[np.ndarray] = None) -> float:
        logits, cache = self.forward(X)
        loss = bce_with_logits(logits if stale_logits is None else stale_logits, masks)
        grads = self.backward(cache, masks, logits=stale_logits)
        self.adam_step(grads)
        return loss

    # -- snapshots --------------------------------------------------------------------

    def save_params(self, path) -> None:
        """Flat binary snapshot: shape header + little-endian float64 data."""
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<HH", SNAPSHOT_VERSION, len(PARAM_NAMES)))
            for name in PARAM_NAMES:
                arr = self.params[name]
                fh.write(struct.pack("<H", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            for name in PARAM_NAMES:
                fh.write(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())

    def load_params(self, path) -> None:
        with open(path, "rb") as fh:
            if fh.read(4) != SNAPSHOT_MAGIC:
                raise ValueError("not a router snapshot file")
            version, n_arrays = struct.unpack("<HH", fh.read(4))
            if version != SNAPSHOT_VERSION:
                raise ValueError(f"unsupported snapshot version {version}")
            if n_arrays != len(PARAM_NAMES):
                raise ValueError("snapshot parameter count mismatch")
            shapes = []
            for _ in range(n_arrays):
                (ndim,) = struct.unpack("<H", fh.read(2))
                shapes.append(struct.unpack(f"<{ndim}q", fh.read(8 * ndim)))
            for name, shape in zip(PARAM_NAMES, shapes):
                expected = self.params[name].shape
                if tuple(shape) != expected:
                    raise ValueError(
                        f"snapshot shape {shape} for {name} does not match {expected}"
                    )
                count = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
                self.params[name] = data.astype(np.float64).copy()


class BatchBuffer:
    """Fixed-capacity buffer of (input, mask) pairs feeding router updates.

    ``observe`` appends and, once ``capacity`` observations are pending,
    recomputes the forward pass on the buffered inputs with the current
    parameters and applies one Adam step (set ``reuse_prediction_logits`` to
    score the loss with the logits captured at prediction time instead).
    ``flush`` forces an update on a partial batch, e.g. at end of stream.
    """

    def __init__(self, router: MLPRouter, capacity: int = 64,
                 reuse_prediction_logits: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.router = router
        self.capacity = capacity
        self.reuse_prediction_logits = reuse_prediction_logits
        self._X = np.empty((capacity, router.n_inputs))
        self._masks = np.empty((capacity, router.n_experts))
        self._logits = np.empty((capacity, router.n_experts))
        self.size = 0
        self.updates = 0
        self.last_loss: Optional[float] = None

    def observe(self, x: np.ndarray, mask: np.ndarray,
                logits: Optional[np.ndarray] = None) -> bool:
        """Queue one observation; returns True when this triggered an update."""
        i = self.size
        self._X[i] = x
        self._masks[i] = mask
        if logits is not None:
            self._logits[i] = logits
        self.size = i + 1
        if self.size >= self.capacity:
            self.flush()
            return True
        return False

    def flush(self) -> None:
        if self.size == 0:
            return
        n = self.size
        stale = self._logits[:n] if self.reuse_prediction_logits else None
        self.last_loss = self.router.train_batch(self._X[:n], self._masks[:n],
                                                 stale_logits=stale)
        self.updates += 1
        self.size = 0
