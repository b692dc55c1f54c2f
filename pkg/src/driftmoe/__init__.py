"""Streaming mixture-of-experts learning under concept drift.

A neural router is co-trained online with a pool of incremental Hoeffding
tree experts; the package bundles the model itself, synthetic drift-stream
generators (LED / SEA / RBF), dataset ingestion, prequential evaluation
metrics, and an experiment CLI.
"""

__version__ = "0.1.0"

from .datasets import DatasetManifest, load_dataset
from .evaluation import PrequentialRecord, run_prequential
from .generators import (
    BENCHMARK_STREAMS,
    ComposedDriftStream,
    DriftStage,
    LedConcept,
    RbfConcept,
    SeaConcept,
    make_benchmark_stream,
)
from .metrics import (
    MetricAccumulator,
    WindowedTrace,
    aggregate_seeds,
    kappa_m,
    kappa_temporal,
    windowed_accuracy,
)
from .moe import DriftMoEClassifier
from .preprocessing import RunningStandardizer
from .streams import Instance, StreamSchema, StreamSource, seed_rng, take
from .tree import HoeffdingTreeClassifier, hoeffding_bound, make_binary_task_tree

__all__ = [
    "BENCHMARK_STREAMS",
    "ComposedDriftStream",
    "DatasetManifest",
    "DriftMoEClassifier",
    "DriftStage",
    "HoeffdingTreeClassifier",
    "Instance",
    "LedConcept",
    "MetricAccumulator",
    "PrequentialRecord",
    "RbfConcept",
    "RunningStandardizer",
    "SeaConcept",
    "StreamSchema",
    "StreamSource",
    "WindowedTrace",
    "aggregate_seeds",
    "hoeffding_bound",
    "kappa_m",
    "kappa_temporal",
    "load_dataset",
    "make_benchmark_stream",
    "make_binary_task_tree",
    "run_prequential",
    "seed_rng",
    "take",
    "windowed_accuracy",
]
