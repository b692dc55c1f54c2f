"""Prequential metrics: accuracy, Kappa-M, Kappa-Temporal, windowed traces.

Both chance baselines are prequential: the majority baseline predicts the
running majority of the true labels seen so far (ties to the lowest class
index), the no-change baseline predicts the previous true label.  The first
instance counts as a miss for both.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional, Sequence


class MetricAccumulator:
    """Per-instance outcome counters for one prequential run."""

    __slots__ = ("num_classes", "n", "n_correct", "class_counts",
                 "n_correct_majority", "n_correct_nochange", "_majority", "_prev")

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.n = 0
        self.n_correct = 0
        self.class_counts = [0] * num_classes
        self.n_correct_majority = 0
        self.n_correct_nochange = 0
        self._majority: Optional[int] = None
        self._prev: Optional[int] = None

    def update(self, y_pred: int, y_true: int) -> None:
        if self._majority is not None and y_true == self._majority:
            self.n_correct_majority += 1
        if self._prev is not None and y_true == self._prev:
            self.n_correct_nochange += 1
        self.n += 1
        if y_pred == y_true:
            self.n_correct += 1
        counts = self.class_counts
        counts[y_true] += 1
        m = self._majority
        if (
            m is None
            or counts[y_true] > counts[m]
            or (counts[y_true] == counts[m] and y_true < m)
        ):
            self._majority = y_true
        self._prev = y_true

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n if self.n else 0.0

    @property
    def majority_accuracy(self) -> float:
        return self.n_correct_majority / self.n if self.n else 0.0

    @property
    def nochange_accuracy(self) -> float:
        return self.n_correct_nochange / self.n if self.n else 0.0

    @property
    def kappa_m_defined(self) -> bool:
        return self.n >= 1 and self.n_correct_majority < self.n

    @property
    def kappa_t_defined(self) -> bool:
        return self.n >= 1 and self.n_correct_nochange < self.n


def kappa_m(acc: MetricAccumulator) -> float:
    """(p0 - pm) / (1 - pm); NaN when the majority baseline is perfect."""
    if acc.n < 1:
        raise ValueError("no instances accumulated")
    if not acc.kappa_m_defined:
        return math.nan
    p0 = acc.accuracy
    pm = acc.majority_accuracy
    return (p0 - pm) / (1.0 - pm)


def kappa_temporal(acc: MetricAccumulator) -> float:
    """(p0 - pe') / (1 - pe'); NaN when the no-change baseline is perfect.

    Strongly negative values are legal: they mean the learner loses to
    simply repeating the previous label.
    """
    if acc.n < 1:
        raise ValueError("no instances accumulated")
    if not acc.kappa_t_defined:
        return math.nan
    p0 = acc.accuracy
    pe = acc.nochange_accuracy
    return (p0 - pe) / (1.0 - pe)


class SeedAggregate(NamedTuple):
    mean: float
    std: float
    n_values: int

    @property
    def single_value(self) -> bool:
        return self.n_values < 2


def aggregate_seeds(values: Sequence[float]) -> SeedAggregate:
    """Mean and sample (n-1) standard deviation across per-seed results."""
    if len(values) == 0:
        raise ValueError("no values to aggregate")
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return SeedAggregate(mean, 0.0, n)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return SeedAggregate(mean, math.sqrt(var), n)


class WindowedTrace(NamedTuple):
    window: int
    points: list  # (window end index, window accuracy)


class WindowedAccuracy:
    """Tumbling-window accuracy accumulator (final partial window included)."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.points: list[tuple[int, float]] = []
        self._seen = 0
        self._hits = 0
        self._index = 0

    def add(self, correct: bool) -> None:
        self._index += 1
        self._seen += 1
        if correct:
            self._hits += 1
        if self._seen == self.window:
            self.points.append((self._index, self._hits / self._seen))
            self._seen = 0
            self._hits = 0

    def close(self) -> WindowedTrace:
        if self._seen:
            self.points.append((self._index, self._hits / self._seen))
            self._seen = 0
            self._hits = 0
        return WindowedTrace(self.window, self.points)


def windowed_accuracy(records: Iterable, window: int) -> WindowedTrace:
    """Tumbling-window accuracy over records carrying a ``correct`` flag."""
    acc = WindowedAccuracy(window)
    for r in records:
        acc.add(bool(r.correct))
    return acc.close()
