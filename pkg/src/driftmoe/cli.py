"""Experiment command line: run, benchmark, sweep, dump-stream.

Every flag can also be supplied through ``--config FILE`` (one ``key = value``
pair per line, same keys as the long flags); explicit flags win.  Each
invocation writes machine-readable CSV plus a metadata JSON recording every
resolved hyperparameter.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    DEFAULT_TRACE_WINDOW,
    ExperimentSpec,
    run_benchmark,
    run_experiments,
    run_sweep,
)
from .generators import BENCHMARK_STREAMS, make_benchmark_stream
from .streams import dump_csv


def _parse_seeds(value: str) -> tuple[int, ...]:
    """Either a count N (seeds 1..N) or an explicit comma list."""
    if "," in value:
        return tuple(int(v) for v in value.split(",") if v.strip())
    return tuple(range(1, int(value) + 1))


def _parse_grid(value: str) -> tuple[int, ...]:
    """Comma list or inclusive range 'a:b'."""
    if ":" in value:
        lo, hi = value.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in value.split(",") if v.strip())


def _parse_hidden(value: str) -> tuple[int, int]:
    parts = [int(v) for v in value.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("hidden sizes must be 'h1,h2'")
    return tuple(parts)


def _load_config_defaults(path: str) -> dict:
    """key = value pairs, '#' comments; keys match the long flag names."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["data", "task"], default=None,
                   help="expert configuration (default: data)")
    p.add_argument("--experts", type=int, default=None,
                   help="expert pool size in data mode (default: 12)")
    p.add_argument("--top-k", type=int, default=None,
                   help="experts trained per instance in data mode (default: 3)")
    p.add_argument("--hidden", type=_parse_hidden, default=None,
                   help="router hidden sizes h1,h2 (default: 128,128)")
    p.add_argument("--lr", type=float, default=None,
                   help="router Adam learning rate (default: 1e-3)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="router mini-batch size (default: 64)")
    p.add_argument("--grace", type=int, default=None,
                   help="tree grace period (default: 50)")
    p.add_argument("--delta", type=float, default=None,
                   help="tree split confidence (default: 1e-7)")
    p.add_argument("--tau", type=float, default=None,
                   help="tree tie threshold (default: 0.05)")
    p.add_argument("--no-standardize", action="store_true",
                   help="feed the router raw instead of standardized features")
    p.add_argument("--stale-logits", action="store_true",
                   help="router updates reuse prediction-time logits (ablation)")
    p.add_argument("--window", type=int, default=None,
                   help=f"trace window size (default: {DEFAULT_TRACE_WINDOW})")
    p.add_argument("--max-instances", type=int, default=None,
                   help="cap instances per run (default: full stream)")
    p.add_argument("--seeds", type=str, default=None,
                   help="seed count N (=> 1..N) or comma list (default: 10)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel runs (default: CPU count)")
    p.add_argument("--config", type=str, default=None,
                   help="key=value file supplying defaults for any flag")


def _spec_overrides(args) -> dict:
    over = {}
    if args.experts is not None:
        over["n_experts"] = args.experts
    if args.top_k is not None:
        over["top_k"] = args.top_k
    if args.hidden is not None:
        over["hidden"] = args.hidden
    if args.lr is not None:
        over["learning_rate"] = args.lr
    if args.batch_size is not None:
        over["batch_size"] = args.batch_size
    if args.grace is not None:
        over["grace_period"] = args.grace
    if args.delta is not None:
        over["split_confidence"] = args.delta
    if args.tau is not None:
        over["tie_threshold"] = args.tau
    if args.no_standardize:
        over["standardize_inputs"] = False
    if args.stale_logits:
        over["reuse_prediction_logits"] = True
    if args.window is not None:
        over["trace_window"] = args.window
    if args.max_instances is not None:
        over["max_instances"] = args.max_instances
    return over


def _apply_config_file(args, parser_flags: dict) -> None:
    if not args.config:
        return
    for key, raw in _load_config_defaults(args.config).items():
        if not hasattr(args, key):
            raise SystemExit(f"config file: unknown key {key!r}")
        if getattr(args, key) is not None and key not in ("no_standardize",
                                                          "stale_logits"):
            continue  # explicit flag wins
        caster = parser_flags.get(key, str)
        setattr(args, key, caster(raw))


_CASTERS = {
    "mode": str,
    "experts": int,
    "top_k": int,
    "hidden": _parse_hidden,
    "lr": float,
    "batch_size": int,
    "grace": int,
    "delta": float,
    "tau": float,
    "window": int,
    "max_instances": int,
    "seeds": str,
    "workers": int,
    "out": str,
    "stream": str,
    "dataset": str,
    "label": str,
    "no_standardize": lambda v: v.lower() in ("1", "true", "yes"),
    "stale_logits": lambda v: v.lower() in ("1", "true", "yes"),
}


def cmd_run(args) -> int:
    _apply_config_file(args, _CASTERS)
    if (args.stream is None) == (args.dataset is None):
        raise SystemExit("specify exactly one of --stream or --dataset")
    seeds = _parse_seeds(args.seeds or "10")
    mode = args.mode or "data"
    over = _spec_overrides(args)
    if args.stream is not None:
        if mode == "task":
            classes = {"led": 10, "sea": 2, "rbf": 5}[args.stream.split("_")[0]]
            if args.experts is not None and args.experts != classes:
                print(f"note: task mode ties the expert count to the class count; "
                      f"using {classes} experts on {args.stream}")
            over.pop("n_experts", None)
        spec = ExperimentSpec(stream=args.stream, mode=mode, seeds=seeds, **over)
    else:
        label: str | int = args.label if args.label is not None else -1
        try:
            label = int(label)
        except (TypeError, ValueError):
            pass
        spec = ExperimentSpec(
            dataset_path=args.dataset,
            dataset_format=args.format,
            label_column=label,
            nominal_encoding=args.nominal_encoding,
            mode=mode,
            seeds=seeds,
            **over,
        )
    rows = run_experiments([spec], Path(args.out), workers=args.workers)
    fails = [r for r in rows if r.n == 0]
    return 1 if fails else 0


def cmd_benchmark(args) -> int:
    _apply_config_file(args, _CASTERS)
    seeds = _parse_seeds(args.seeds or "10")
    streams = args.streams.split(",") if args.streams else list(BENCHMARK_STREAMS)
    modes = args.modes.split(",") if args.modes else ["data", "task"]
    over = _spec_overrides(args)
    over.pop("n_experts", None) if args.experts is None else None
    rows = run_benchmark(
        Path(args.out), streams=streams, modes=modes, seeds=seeds,
        workers=args.workers, **over,
    )
    expected = len(streams) * len(modes) * len(seeds)
    return 0 if len(rows) >= expected else 1


def cmd_sweep(args) -> int:
    _apply_config_file(args, _CASTERS)
    seeds = _parse_seeds(args.seeds or "2")
    over = _spec_overrides(args)
    over.pop("n_experts", None)
    over.pop("top_k", None)
    run_sweep(
        Path(args.out),
        stream=args.stream,
        experts_grid=_parse_grid(args.experts_grid),
        topk_grid=_parse_grid(args.topk_grid),
        seeds=seeds,
        workers=args.workers,
        **over,
    )
    return 0


def cmd_dump_stream(args) -> int:
    source = make_benchmark_stream(args.stream, args.seed)
    n = dump_csv(source, args.out, limit=args.count)
    print(f"wrote {n} instances to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftmoe",
        description="mixture-of-experts stream learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one configuration across seeds")
    p_run.add_argument("--stream", choices=BENCHMARK_STREAMS, default=None)
    p_run.add_argument("--dataset", type=str, default=None,
                       help="path to an ARFF or CSV file")
    p_run.add_argument("--format", choices=["arff", "csv"], default=None)
    p_run.add_argument("--label", type=str, default=None,
                       help="label column name or index (default: last column)")
    p_run.add_argument("--nominal-encoding", choices=["index", "one_hot"],
                       default="index")
    p_run.add_argument("--out", type=str, required=True)
    _add_model_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("benchmark",
                             help="all synthetic streams x both modes")
    p_bench.add_argument("--streams", type=str, default=None,
                         help="comma subset (default: all six)")
    p_bench.add_argument("--modes", type=str, default=None,
                         help="comma subset of data,task (default: both)")
    p_bench.add_argument("--out", type=str, required=True)
    _add_model_flags(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)

    p_sweep = sub.add_parser("sweep", help="experts x top-k accuracy grid")
    p_sweep.add_argument("--stream", choices=BENCHMARK_STREAMS, required=True)
    p_sweep.add_argument("--experts-grid", type=str, required=True,
                         help="comma list or inclusive range a:b")
    p_sweep.add_argument("--topk-grid", type=str, required=True)
    p_sweep.add_argument("--out", type=str, required=True)
    _add_model_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_dump = sub.add_parser("dump-stream", help="write a generated stream to CSV")
    p_dump.add_argument("--stream", choices=BENCHMARK_STREAMS, required=True)
    p_dump.add_argument("--seed", type=int, default=1)
    p_dump.add_argument("--count", type=int, default=None,
                        help="instances to write (default: whole stream)")
    p_dump.add_argument("--out", type=str, required=True)
    p_dump.set_defaults(func=cmd_dump_stream)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
