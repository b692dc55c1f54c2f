"""Experiment orchestration: single runs, multi-seed grids, benchmark, sweep.

Every result row carries its seed and the hash of the fully resolved
configuration, so any row can be reproduced bit-for-bit by re-running its
config.  Output directories are idempotent: rows already present with a
matching config hash are reused instead of recomputed, which also makes
long grids resumable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .datasets import DatasetManifest, load_dataset
from .evaluation import run_prequential
from .generators import BENCHMARK_STREAMS, make_benchmark_stream
from .metrics import aggregate_seeds, kappa_m, kappa_temporal
from .moe import DriftMoEClassifier
from .streams import StreamSource

RESULT_COLUMNS = (
    "dataset", "mode", "seed", "n", "accuracy", "kappa_m", "kappa_t",
    "runtime_s", "config_hash",
)

DEFAULT_TRACE_WINDOW = 10_000


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved description of one (stream-or-dataset, mode) experiment."""

    stream: Optional[str] = None
    dataset_path: Optional[str] = None
    dataset_format: Optional[str] = None
    label_column: str | int = -1
    nominal_encoding: str = "index"
    mode: str = "data"
    n_experts: int = 12
    top_k: int = 3
    hidden: tuple[int, int] = (128, 128)
    learning_rate: float = 1e-3
    batch_size: int = 64
    grace_period: int = 50
    split_confidence: float = 1e-7
    tie_threshold: float = 0.05
    max_depth: Optional[int] = None
    standardize_inputs: bool = True
    reuse_prediction_logits: bool = False
    seeds: tuple[int, ...] = tuple(range(1, 11))
    trace_window: int = DEFAULT_TRACE_WINDOW
    max_instances: Optional[int] = None

    def __post_init__(self):
        if (self.stream is None) == (self.dataset_path is None):
            raise ValueError("specify exactly one of stream or dataset_path")
        if self.stream is not None and self.stream not in BENCHMARK_STREAMS:
            raise ValueError(
                f"unknown stream {self.stream!r}; expected one of {BENCHMARK_STREAMS}"
            )
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @property
    def dataset_name(self) -> str:
        if self.stream is not None:
            return self.stream
        return Path(self.dataset_path).stem

    def config_dict(self) -> dict:
        d = asdict(self)
        d.pop("seeds")
        d["hidden"] = list(self.hidden)
        return d

    def config_hash(self) -> str:
        canonical = json.dumps(self.config_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class RunRow:
    dataset: str
    mode: str
    seed: int
    n: int
    accuracy: float
    kappa_m: float
    kappa_t: float
    runtime_s: float
    config_hash: str

    def key(self) -> tuple:
        return (self.dataset, self.mode, self.seed, self.config_hash)


_dataset_cache: dict[tuple, StreamSource] = {}


def _make_stream(spec: ExperimentSpec, seed: int) -> StreamSource:
    if spec.stream is not None:
        return make_benchmark_stream(spec.stream, seed)
    key = (spec.dataset_path, spec.dataset_format, str(spec.label_column),
           spec.nominal_encoding)
    if key not in _dataset_cache:
        _dataset_cache[key] = load_dataset(
            DatasetManifest(
                path=spec.dataset_path,
                format=spec.dataset_format,
                label_column=spec.label_column,
                nominal_encoding=spec.nominal_encoding,
            )
        )
    base = _dataset_cache[key]
    return type(base)(base.X, base.y, base.schema())


def make_model(spec: ExperimentSpec, seed: int) -> DriftMoEClassifier:
    return DriftMoEClassifier(
        mode=spec.mode,
        n_experts=spec.n_experts,
        top_k=spec.top_k,
        hidden=tuple(spec.hidden),
        learning_rate=spec.learning_rate,
        batch_size=spec.batch_size,
        grace_period=spec.grace_period,
        split_confidence=spec.split_confidence,
        tie_threshold=spec.tie_threshold,
        max_depth=spec.max_depth,
        standardize_inputs=spec.standardize_inputs,
        reuse_prediction_logits=spec.reuse_prediction_logits,
        seed=seed,
    )


def run_single(spec: ExperimentSpec, seed: int) -> tuple[RunRow, list]:
    """Execute one prequential run; returns its metrics row and trace points."""
    source = _make_stream(spec, seed)
    model = make_model(spec, seed)
    model.initialize(source.schema())
    start = time.perf_counter()
    result = run_prequential(
        model, source, window=spec.trace_window, max_instances=spec.max_instances
    )
    elapsed = time.perf_counter() - start
    acc = result.metrics
    row = RunRow(
        dataset=spec.dataset_name,
        mode=spec.mode,
        seed=seed,
        n=result.n_instances,
        accuracy=acc.accuracy,
        kappa_m=kappa_m(acc),
        kappa_t=kappa_temporal(acc),
        runtime_s=elapsed,
        config_hash=spec.config_hash(),
    )
    return row, result.trace.points


def _execute_task(payload: tuple[dict, int]) -> tuple[dict, list]:
    spec_dict, seed = payload
    spec = ExperimentSpec(**spec_dict)
    row, trace = run_single(spec, seed)
    return asdict(row), trace


def _spec_to_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["hidden"] = tuple(spec.hidden)
    d["seeds"] = tuple(spec.seeds)
    return d


def _trace_path(out_dir: Path, row: RunRow) -> Path:
    return out_dir / "traces" / f"{row.dataset}_{row.mode}_seed{row.seed}.csv"


def _write_trace(path: Path, points: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_end", "accuracy"])
        for end, value in points:
            writer.writerow([end, repr(float(value))])


def read_trace(path: Path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(int(r["window_end"]), float(r["accuracy"])) for r in reader]


def format_row(row: RunRow) -> list[str]:
    return [
        row.dataset, row.mode, str(row.seed), str(row.n),
        repr(row.accuracy), repr(row.kappa_m), repr(row.kappa_t),
        repr(row.runtime_s), row.config_hash,
    ]


def write_results_csv(path: Path, rows: Sequence[RunRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(format_row(row))


def read_results_csv(path: Path) -> list[RunRow]:
    if not path.exists():
        return []
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append(
                RunRow(
                    dataset=r["dataset"],
                    mode=r["mode"],
                    seed=int(r["seed"]),
                    n=int(r["n"]),
                    accuracy=float(r["accuracy"]),
                    kappa_m=float(r["kappa_m"]),
                    kappa_t=float(r["kappa_t"]),
                    runtime_s=float(r["runtime_s"]),
                    config_hash=r["config_hash"],
                )
            )
    return rows


def run_experiments(
    specs: Sequence[ExperimentSpec],
    out_dir: Path,
    workers: Optional[int] = None,
    reuse: bool = True,
    log=print,
) -> list[RunRow]:
    """Run every (spec, seed) pair, reusing rows already in ``out_dir``.

    Rows land in results.csv (sorted by dataset, mode, seed), per-run traces
    under traces/, per-experiment aggregates in aggregate.csv, and the
    resolved configs in metadata.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.csv"
    existing = {r.key(): r for r in read_results_csv(results_path)} if reuse else {}

    tasks = []
    kept: dict[tuple, RunRow] = {}
    for spec in specs:
        h = spec.config_hash()
        for seed in spec.seeds:
            key = (spec.dataset_name, spec.mode, seed, h)
            if key in existing and _trace_path(out_dir, existing[key]).exists():
                kept[key] = existing[key]
            else:
                tasks.append((_spec_to_dict(spec), seed))

    if tasks:
        workers = workers or os.cpu_count() or 1
        log(f"running {len(tasks)} run(s) on {workers} worker(s) "
            f"({len(kept)} cached)")
        if workers == 1 or len(tasks) == 1:
            outcomes = map(_execute_task, tasks)
            for row_dict, trace in outcomes:
                row = RunRow(**row_dict)
                kept[row.key()] = row
                _write_trace(_trace_path(out_dir, row), trace)
                log(f"  done {row.dataset}/{row.mode} seed {row.seed}: "
                    f"accuracy {row.accuracy:.4f} in {row.runtime_s:.0f}s")
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row_dict, trace in pool.map(_execute_task, tasks):
                    row = RunRow(**row_dict)
                    kept[row.key()] = row
                    _write_trace(_trace_path(out_dir, row), trace)
                    log(f"  done {row.dataset}/{row.mode} seed {row.seed}: "
                        f"accuracy {row.accuracy:.4f} in {row.runtime_s:.0f}s")
    else:
        log(f"all {len(kept)} run(s) cached in {out_dir}")

    rows = sorted(kept.values(), key=lambda r: (r.dataset, r.mode, r.seed))
    write_results_csv(results_path, rows)
    _write_aggregates(out_dir / "aggregate.csv", specs, rows)
    _write_metadata(out_dir / "metadata.json", specs)
    return rows


def rows_for(rows: Sequence[RunRow], spec: ExperimentSpec) -> list[RunRow]:
    h = spec.config_hash()
    return sorted(
        (
            r
            for r in rows
            if r.dataset == spec.dataset_name
            and r.mode == spec.mode
            and r.config_hash == h
            and r.seed in spec.seeds
        ),
        key=lambda r: r.seed,
    )


def _write_aggregates(path: Path, specs: Sequence[ExperimentSpec],
                      rows: Sequence[RunRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["dataset", "mode", "n_seeds", "accuracy_mean", "accuracy_std",
             "kappa_m_mean", "kappa_m_std", "kappa_t_mean", "kappa_t_std",
             "config_hash"]
        )
        for spec in specs:
            sub = rows_for(rows, spec)
            if not sub:
                continue
            agg_acc = aggregate_seeds([r.accuracy for r in sub])
            agg_km = aggregate_seeds([r.kappa_m for r in sub])
            agg_kt = aggregate_seeds([r.kappa_t for r in sub])
            writer.writerow(
                [spec.dataset_name, spec.mode, len(sub),
                 repr(agg_acc.mean), repr(agg_acc.std),
                 repr(agg_km.mean), repr(agg_km.std),
                 repr(agg_kt.mean), repr(agg_kt.std),
                 spec.config_hash()]
            )


def _write_metadata(path: Path, specs: Sequence[ExperimentSpec]) -> None:
    import numpy
    import scipy

    meta = {
        "driftmoe_version": __version__,
        "numpy_version": numpy.__version__,
        "scipy_version": scipy.__version__,
        "python_version": sys.version.split()[0],
        "experiments": [
            {"config": s.config_dict(), "seeds": list(s.seeds),
             "config_hash": s.config_hash()}
            for s in specs
        ],
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2)


def benchmark_specs(
    streams: Sequence[str] = BENCHMARK_STREAMS,
    modes: Sequence[str] = ("data", "task"),
    seeds: Sequence[int] = tuple(range(1, 11)),
    **overrides,
) -> list[ExperimentSpec]:
    """The reproduction grid: every stream x mode at the fixed configuration."""
    return [
        ExperimentSpec(stream=s, mode=m, seeds=tuple(seeds), **overrides)
        for s in streams
        for m in modes
    ]


def run_benchmark(
    out_dir: Path,
    streams: Sequence[str] = BENCHMARK_STREAMS,
    modes: Sequence[str] = ("data", "task"),
    seeds: Sequence[int] = tuple(range(1, 11)),
    workers: Optional[int] = None,
    log=print,
    **overrides,
) -> list[RunRow]:
    specs = benchmark_specs(streams, modes, seeds, **overrides)
    rows = run_experiments(specs, Path(out_dir), workers=workers, log=log)
    _write_benchmark_table(Path(out_dir) / "benchmark_table.csv", specs, rows)
    return rows


def _write_benchmark_table(path: Path, specs: Sequence[ExperimentSpec],
                           rows: Sequence[RunRow]) -> None:
    by_key: dict[tuple, dict] = {}
    for spec in specs:
        sub = rows_for(rows, spec)
        if not sub:
            continue
        cell = by_key.setdefault((spec.dataset_name,), {})
        for metric, values in (
            ("accuracy", [r.accuracy for r in sub]),
            ("kappa_m", [r.kappa_m for r in sub]),
            ("kappa_t", [r.kappa_t for r in sub]),
        ):
            agg = aggregate_seeds(values)
            cell[f"moe_{spec.mode}_{metric}_mean"] = agg.mean
            cell[f"moe_{spec.mode}_{metric}_std"] = agg.std
    columns = ["dataset"]
    for mode in ("data", "task"):
        for metric in ("accuracy", "kappa_m", "kappa_t"):
            columns += [f"moe_{mode}_{metric}_mean", f"moe_{mode}_{metric}_std"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for (dataset,), cell in sorted(by_key.items()):
            writer.writerow(
                [dataset] + [repr(cell[c]) if c in cell else "" for c in columns[1:]]
            )


def run_sweep(
    out_dir: Path,
    stream: str,
    experts_grid: Sequence[int],
    topk_grid: Sequence[int],
    seeds: Sequence[int],
    workers: Optional[int] = None,
    log=print,
    **overrides,
) -> list[tuple[int, int, Optional[float]]]:
    """Accuracy per (experts, top_k) cell averaged over seeds.

    Infeasible cells (top_k > experts) are skipped: they still get a row in
    sweep.csv, with an empty accuracy field, plus a logged warning.
    """
    out_dir = Path(out_dir)
    specs, cells = [], []
    for n in experts_grid:
        for k in topk_grid:
            if k > n:
                log(f"warning: skipping infeasible cell experts={n} top_k={k}")
                cells.append((n, k, None))
                continue
            spec = ExperimentSpec(
                stream=stream, mode="data", n_experts=n, top_k=k,
                seeds=tuple(seeds), **overrides,
            )
            specs.append(spec)
            cells.append((n, k, spec))
    rows = run_experiments(specs, out_dir, workers=workers, log=log)
    out = []
    for n, k, spec in cells:
        if spec is None:
            out.append((n, k, None))
        else:
            sub = rows_for(rows, spec)
            out.append((n, k, aggregate_seeds([r.accuracy for r in sub]).mean))
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experts", "top_k", "accuracy"])
        for n, k, value in out:
            writer.writerow([n, k, "" if value is None else repr(value)])
    return out
