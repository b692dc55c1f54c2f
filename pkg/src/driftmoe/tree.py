"""Incremental Hoeffding tree with Naive-Bayes leaves.

Leaves keep per-class sufficient statistics: count tables for binary
attributes and streaming Gaussian estimators (count / mean / M2) for numeric
ones.  A leaf is evaluated for splitting every ``grace_period`` training
instances; the best attribute wins when its information-gain lead over the
runner-up exceeds the Hoeffding bound, or when the bound has shrunk below
the tie threshold.  Numeric attributes are split on one of ten
equal-probability thresholds of the pooled per-attribute Gaussian.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri
from sklearn.base import BaseEstimator, ClassifierMixin

from .streams import StreamSchema, numeric_schema

VARIANCE_FLOOR = 1e-12
NUM_SPLIT_CANDIDATES = 10
LOG_2PI = math.log(2.0 * math.pi)


def hoeffding_bound(value_range: float, confidence: float, n: float) -> float:
    """epsilon = sqrt(R^2 ln(1/delta) / (2n)); shrinks as 1/sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if value_range <= 0.0:
        raise ValueError("value_range must be positive")
    return math.sqrt(value_range * value_range * math.log(1.0 / confidence) / (2.0 * n))


def _entropy_bits(counts: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in bits of (possibly fractional) count vectors."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, counts / np.where(n > 0, n, 1.0), 0.0)
        plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=axis)


class _FeatureLayout:
    """Shared per-tree description of which attributes are binary vs numeric."""

    __slots__ = ("n_classes", "bin_idx", "num_idx", "n_bin", "n_num", "all_binary",
                 "all_numeric", "_bin_arange")

    def __init__(self, schema: StreamSchema):
        self.n_classes = schema.num_classes
        self.bin_idx = schema.binary_indices
        self.num_idx = schema.numeric_indices
        self.n_bin = len(self.bin_idx)
        self.n_num = len(self.num_idx)
        self.all_binary = self.n_bin == schema.num_features
        self.all_numeric = self.n_num == schema.num_features
        self._bin_arange = np.arange(self.n_bin)

    def binary_part(self, x: np.ndarray) -> np.ndarray:
        return x if self.all_binary else x[self.bin_idx]

    def numeric_part(self, x: np.ndarray) -> np.ndarray:
        return x if self.all_numeric else x[self.num_idx]


class _LeafNode:
    __slots__ = (
        "layout", "depth", "class_counts", "obs_class_counts", "obs_total",
        "bin_counts", "num_count", "num_mean", "num_m2", "n_since_eval",
        "_cache_dirty", "_nb_base", "_nb_delta", "_g_lognorm", "_g_inv2v",
    )
    is_leaf = True

    def __init__(self, layout: _FeatureLayout, depth: int,
                 class_counts: Optional[np.ndarray] = None):
        self.layout = layout
        self.depth = depth
        C = layout.n_classes
        self.class_counts = (
            class_counts.astype(np.float64) if class_counts is not None else np.zeros(C)
        )
        self.obs_class_counts = np.zeros(C)
        self.obs_total = 0.0
        self.bin_counts = (
            np.zeros((layout.n_bin, C, 2)) if layout.n_bin else None
        )
        if layout.n_num:
            self.num_count = np.zeros((layout.n_num, C))
            self.num_mean = np.zeros((layout.n_num, C))
            self.num_m2 = np.zeros((layout.n_num, C))
        else:
            self.num_count = self.num_mean = self.num_m2 = None
        self.n_since_eval = 0
        self._cache_dirty = True
        self._nb_base = None
        self._nb_delta = None
        self._g_lognorm = None
        self._g_inv2v = None

    # -- statistics -------------------------------------------------------------

    def learn(self, x: np.ndarray, y: int) -> None:
        self.class_counts[y] += 1.0
        self.obs_class_counts[y] += 1.0
        self.obs_total += 1.0
        lay = self.layout
        if lay.n_bin:
            xb = lay.binary_part(x)
            self.bin_counts[lay._bin_arange, y, (xb != 0.0).astype(np.intp)] += 1.0
        if lay.n_num:
            xn = lay.numeric_part(x)
            cnt = self.num_count[:, y]
            cnt += 1.0
            delta = xn - self.num_mean[:, y]
            self.num_mean[:, y] += delta / cnt
            self.num_m2[:, y] += delta * (xn - self.num_mean[:, y])
        self._cache_dirty = True

    def _num_variance(self) -> np.ndarray:
        var = self.num_m2 / np.maximum(self.num_count - 1.0, 1.0)
        return np.maximum(var, VARIANCE_FLOOR)

    def _rebuild_cache(self) -> None:
        lay = self.layout
        C = lay.n_classes
        logprior = np.log(self.class_counts + 1.0) - math.log(self.class_counts.sum() + C)
        if lay.n_bin:
            ll = np.log(self.bin_counts + 1.0) - np.log(self.obs_class_counts + 2.0)[:, None]
            self._nb_base = logprior + ll[:, :, 0].sum(axis=0)
            self._nb_delta = ll[:, :, 1] - ll[:, :, 0]
        else:
            self._nb_base = logprior
        if lay.n_num:
            var = self._num_variance()
            self._g_lognorm = -0.5 * (LOG_2PI + np.log(var))
            self._g_inv2v = 0.5 / var
        self._cache_dirty = False

    def log_votes(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized per-class log scores (argmax matches nb prediction)."""
        if self._cache_dirty:
            self._rebuild_cache()
        lay = self.layout
        if lay.n_bin:
            votes = self._nb_base + lay.binary_part(x) @ self._nb_delta
        else:
            votes = self._nb_base.copy()
        if lay.n_num and self.obs_total > 0.0:
            z = lay.numeric_part(x)[:, None] - self.num_mean
            ll = self._g_lognorm - z * z * self._g_inv2v
            votes = votes + ll.sum(axis=0)
            votes[self.obs_class_counts == 0.0] = -np.inf
        return votes

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        votes = self.log_votes(x)
        votes = votes - votes.max()
        p = np.exp(votes)
        return p / p.sum()

    # -- split evaluation ---------------------------------------------------------

    def is_impure(self) -> bool:
        return int(np.count_nonzero(self.class_counts > 0.0)) >= 2

    def attribute_gains(self) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Information gain per attribute (schema order); second element holds
        the best split threshold per numeric attribute (nan where untestable)."""
        lay = self.layout
        d = lay.n_bin + lay.n_num
        gains = np.zeros(d)
        thresholds = np.full(d, np.nan) if lay.n_num else None
        h0 = float(_entropy_bits(self.obs_class_counts))
        n = self.obs_total
        if n <= 0:
            return gains, thresholds
        if lay.n_bin:
            branch_h = _entropy_bits(self.bin_counts, axis=1)  # (A, 2)
            branch_n = self.bin_counts.sum(axis=1)  # (A, 2)
            cond = (branch_n * branch_h).sum(axis=1) / n
            gains[lay.bin_idx] = np.maximum(h0 - cond, 0.0)
        if lay.n_num:
            g, th = self._numeric_gains(h0)
            gains[lay.num_idx] = g
            thresholds[lay.num_idx] = th
        return gains, thresholds

    def _numeric_gains(self, h0: float) -> tuple[np.ndarray, np.ndarray]:
        cnt = self.num_count  # (A, C)
        n_obs = cnt.sum(axis=1)  # (A,)
        var = self._num_variance()
        mean = self.num_mean
        pool_n = np.maximum(n_obs, 1.0)
        pool_mean = (cnt * mean).sum(axis=1) / pool_n
        pool_var = (cnt * (var + mean * mean)).sum(axis=1) / pool_n - pool_mean**2
        pool_std = np.sqrt(np.maximum(pool_var, 0.0))
        q = ndtri(np.arange(1, NUM_SPLIT_CANDIDATES + 1) / (NUM_SPLIT_CANDIDATES + 1.0))
        cand = pool_mean[:, None] + pool_std[:, None] * q[None, :]  # (A, Q)
        sd = np.sqrt(var)
        z = (cand[:, :, None] - mean[:, None, :]) / sd[:, None, :]  # (A, Q, C)
        left = cnt[:, None, :] * ndtr(z)
        right = np.maximum(cnt[:, None, :] - left, 0.0)
        nl = left.sum(axis=2)
        nr = right.sum(axis=2)
        hl = _entropy_bits(left, axis=2)
        hr = _entropy_bits(right, axis=2)
        with np.errstate(invalid="ignore"):
            cond = np.where(n_obs[:, None] > 0, (nl * hl + nr * hr) / np.maximum(n_obs[:, None], 1.0), h0)
        gains_q = np.maximum(h0 - cond, 0.0)
        gains_q[pool_std <= 0.0, :] = 0.0
        best_q = gains_q.argmax(axis=1)
        rows = np.arange(len(cnt))
        return gains_q[rows, best_q], cand[rows, best_q]

    def split_child_counts(self, attr_pos: int, threshold: float) -> tuple[np.ndarray, np.ndarray]:
        """Projected per-branch class counts for a split on schema attribute
        ``attr_pos`` (used as NB priors of the children)."""
        lay = self.layout
        where_bin = np.nonzero(lay.bin_idx == attr_pos)[0]
        if len(where_bin):
            j = int(where_bin[0])
            return self.bin_counts[j, :, 0].copy(), self.bin_counts[j, :, 1].copy()
        j = int(np.nonzero(lay.num_idx == attr_pos)[0][0])
        cnt = self.num_count[j]
        sd = np.sqrt(self._num_variance()[j])
        left = cnt * ndtr((threshold - self.num_mean[j]) / sd)
        return left, np.maximum(cnt - left, 0.0)


class _SplitNode:
    __slots__ = ("attr", "threshold", "numeric", "children")
    is_leaf = False

    def __init__(self, attr: int, threshold: Optional[float], numeric: bool,
                 children: list):
        self.attr = attr
        self.threshold = threshold
        self.numeric = numeric
        self.children = children

    def route(self, x: np.ndarray) -> int:
        if self.numeric:
            return 0 if x[self.attr] <= self.threshold else 1
        return 0 if x[self.attr] == 0.0 else 1


class HoeffdingTreeClassifier(BaseEstimator, ClassifierMixin):
    """Streaming decision tree split-gated by the Hoeffding bound.

    Parameters
    ----------
    grace_period : instances a leaf must accumulate between split checks.
    split_confidence : delta of the Hoeffding bound.
    tie_threshold : split regardless of the gain gap once the bound is this small.
    max_depth : optional depth cap; leaves at the cap never split.
    """

    def __init__(self, grace_period: int = 50, split_confidence: float = 1e-7,
                 tie_threshold: float = 0.05, max_depth: Optional[int] = None):
        self.grace_period = grace_period
        self.split_confidence = split_confidence
        self.tie_threshold = tie_threshold
        self.max_depth = max_depth

    def initialize(self, schema: StreamSchema) -> "HoeffdingTreeClassifier":
        if self.grace_period < 1:
            raise ValueError("grace_period must be >= 1")
        if not 0.0 < self.split_confidence < 1.0:
            raise ValueError("split_confidence must be in (0, 1)")
        self.schema_ = schema
        self._layout = _FeatureLayout(schema)
        self._range = math.log2(schema.num_classes)
        self.root_ = _LeafNode(self._layout, 0)
        self.n_seen_ = 0
        self.n_nodes_ = 1
        return self

    # -- streaming interface -------------------------------------------------------

    def _sort(self, x: np.ndarray) -> _LeafNode:
        node = self.root_
        while not node.is_leaf:
            node = node.children[node.route(x)]
        return node

    def learn_one(self, x: np.ndarray, y: int) -> None:
        leaf = self._sort(x)
        leaf.learn(x, y)
        self.n_seen_ += 1
        leaf.n_since_eval += 1
        if leaf.n_since_eval >= self.grace_period:
            leaf.n_since_eval = 0
            if leaf.is_impure() and (
                self.max_depth is None or leaf.depth < self.max_depth
            ):
                self._attempt_split(leaf, x)

    def _attempt_split(self, leaf: _LeafNode, x: np.ndarray) -> None:
        gains, thresholds = leaf.attribute_gains()
        best = int(np.argmax(gains))
        g1 = float(gains[best])
        g2 = float(np.delete(gains, best).max()) if len(gains) > 1 else 0.0
        if g1 <= 0.0:
            return
        n = float(leaf.class_counts.sum())
        eps = hoeffding_bound(self._range, self.split_confidence, max(n, 1.0))
        if not (g1 - g2 > eps or eps < self.tie_threshold):
            return
        numeric = thresholds is not None and not np.isnan(thresholds[best])
        threshold = float(thresholds[best]) if numeric else None
        left_counts, right_counts = leaf.split_child_counts(best, threshold)
        # redistribute the leaf's own inherited mass proportionally so class
        # counts are conserved across the whole frontier
        inherited = np.maximum(leaf.class_counts - leaf.obs_class_counts, 0.0)
        if inherited.any() and leaf.obs_total > 0:
            share = left_counts.sum() / leaf.obs_total
            left_counts = left_counts + inherited * share
            right_counts = right_counts + inherited * (1.0 - share)
        children = [
            _LeafNode(self._layout, leaf.depth + 1, left_counts),
            _LeafNode(self._layout, leaf.depth + 1, right_counts),
        ]
        split = _SplitNode(best, threshold, numeric, children)
        self._replace(leaf, split, x)
        self.n_nodes_ += 2

    def _replace(self, leaf: _LeafNode, split: _SplitNode, x: np.ndarray) -> None:
        if self.root_ is leaf:
            self.root_ = split
            return
        node = self.root_
        while True:
            branch = node.route(x)
            child = node.children[branch]
            if child is leaf:
                node.children[branch] = split
                return
            node = child

    def log_votes_one(self, x: np.ndarray) -> np.ndarray:
        return self._sort(x).log_votes(x)

    def predict_proba_one(self, x: np.ndarray) -> np.ndarray:
        return self._sort(x).predict_proba(x)

    def predict_one(self, x: np.ndarray) -> int:
        return int(np.argmax(self._sort(x).log_votes(x)))

    # -- sklearn-style batch surface -------------------------------------------------

    def _ensure_initialized(self, X: np.ndarray, classes=None) -> None:
        if not hasattr(self, "root_"):
            if classes is None:
                raise ValueError("pass classes= on the first partial_fit call")
            self.initialize(numeric_schema(X.shape[1], len(classes)))
            self.classes_ = np.asarray(classes)

    def partial_fit(self, X, y, classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self._ensure_initialized(X, classes)
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

    # -- diagnostics -----------------------------------------------------------------

    def dump_text(self) -> str:
        """One node per line: depth, split test or leaf class histogram."""
        lines = []

        def walk(node, depth):
            pad = "  " * depth
            if node.is_leaf:
                hist = ", ".join(
                    f"{c}:{v:g}" for c, v in enumerate(node.class_counts) if v > 0
                )
                lines.append(f"{pad}leaf [{hist}]")
            else:
                test = (
                    f"x[{node.attr}] <= {node.threshold:.6g}"
                    if node.numeric
                    else f"x[{node.attr}] == 0"
                )
                lines.append(f"{pad}split {test}")
                for child in node.children:
                    walk(child, depth + 1)

        walk(self.root_, 0)
        return "\n".join(lines)


def info_gain(leaf: _LeafNode, attribute: int) -> float:
    """Information gain (bits) of splitting ``leaf`` on ``attribute``."""
    gains, _ = leaf.attribute_gains()
    return float(gains[attribute])


def nb_leaf_predict(leaf: _LeafNode, x: np.ndarray) -> np.ndarray:
    """Normalized Naive-Bayes class distribution of ``leaf`` for input ``x``."""
    return leaf.predict_proba(np.asarray(x, dtype=np.float64))


class BinaryTaskTree:
    """One-vs-rest expert: a binary Hoeffding tree for a single class."""

    def __init__(self, class_index: int, schema: StreamSchema, **tree_params):
        self.class_index = class_index
        self.tree = HoeffdingTreeClassifier(**tree_params).initialize(
            StreamSchema(schema.num_features, schema.feature_kinds, 2)
        )

    def learn_one(self, x: np.ndarray, y: int) -> None:
        self.tree.learn_one(x, 1 if y == self.class_index else 0)

    def positive_probability(self, x: np.ndarray) -> float:
        return float(self.tree.predict_proba_one(x)[1])

    def predicts_positive(self, x: np.ndarray) -> bool:
        """Thresholded binary output (argmax with ties to the negative class)."""
        votes = self.tree.log_votes_one(x)
        return votes[1] > votes[0]


def make_binary_task_tree(class_index: int, schema: StreamSchema, **tree_params) -> BinaryTaskTree:
    if not 0 <= class_index < schema.num_classes:
        raise ValueError(f"class_index {class_index} outside [0, {schema.num_classes})")
    return BinaryTaskTree(class_index, schema, **tree_params)
