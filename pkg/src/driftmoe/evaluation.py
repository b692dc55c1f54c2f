"""Interleaved test-then-train evaluation loop."""

from __future__ import annotations

from typing import Callable, NamedTuple, Optional

from .metrics import MetricAccumulator, WindowedAccuracy, WindowedTrace
from .streams import StreamSource


class SchemaMismatchError(ValueError):
    """Model and stream disagree on feature count or class count."""


class PrequentialRecord(NamedTuple):
    index: int  # 1-based instance position
    y_true: int
    y_pred: int
    correct: bool


class PrequentialResult(NamedTuple):
    metrics: MetricAccumulator
    trace: Optional[WindowedTrace]
    n_instances: int


def _check_schema(model, source: StreamSource) -> None:
    schema = source.schema()
    if not model.is_initialized:
        model.initialize(schema)
        return
    have = model.schema_
    if (
        have.num_features != schema.num_features
        or have.num_classes != schema.num_classes
    ):
        raise SchemaMismatchError(
            f"model built for {have.num_features} features / {have.num_classes} "
            f"classes, stream provides {schema.num_features} / {schema.num_classes}"
        )


def run_prequential(
    model,
    source: StreamSource,
    window: Optional[int] = None,
    sink: Optional[Callable[[PrequentialRecord], None]] = None,
    max_instances: Optional[int] = None,
    finalize: bool = True,
) -> PrequentialResult:
    """Drive ``source`` through ``model``, predicting each instance before
    training on it.  Optionally emits per-instance records to ``sink`` and
    accumulates a tumbling-window accuracy trace.
    """
    _check_schema(model, source)
    acc = MetricAccumulator(source.schema().num_classes)
    windows = WindowedAccuracy(window) if window else None
    t = 0
    for inst in source:
        if max_instances is not None and t >= max_instances:
            break
        t += 1
        outcome = model.learn_one(inst.features, inst.label)
        correct = outcome.y_pred == inst.label
        acc.update(outcome.y_pred, inst.label)
        if windows is not None:
            windows.add(correct)
        if sink is not None:
            sink(PrequentialRecord(t, inst.label, outcome.y_pred, correct))
    if finalize:
        model.finalize()
    trace = windows.close() if windows is not None else None
    return PrequentialResult(acc, trace, t)
