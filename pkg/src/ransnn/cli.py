"""Command-line experiment runner.

Subcommands: run (single experiment), sweep (vary one parameter), compare
(both methods on one config), inspect-idx (dump an IDX header). Exit codes:
0 success, 1 configuration error, 2 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .harness import (ConfigError, ExperimentConfig, SweepSpec,
                      compare_methods, config_from_file, emit_metrics,
                      run_experiment, run_sweep, summarize_sweep)
from .idx import DatasetError, IdxError, read_idx


def _load_config(args) -> ExperimentConfig:
    cfg = config_from_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _emit(records, out_path) -> None:
    fmt = "json" if str(out_path).endswith(".json") else "csv"
    emit_metrics(records, out_path, format=fmt)
    print(f"wrote {fmt} metrics to {out_path}")


def _print_record(rec) -> None:
    print(f"[{rec.run_id}] {rec.dataset}/{rec.method}: "
          f"accuracy={rec.final_accuracy:.4f} "
          f"train_s={rec.training_seconds:.3f} "
          f"features_s={rec.feature_extraction_seconds:.3f} "
          f"total_s={rec.total_seconds:.3f}")


def cmd_run(args) -> int:
    rec = run_experiment(_load_config(args))
    _print_record(rec)
    if args.out:
        _emit([rec], args.out)
    return 0


def _split_values(raw: str) -> list[str]:
    """Split a comma-separated value list, ignoring commas inside parens so
    distribution literals like U(-0.05,0.05) stay intact."""
    parts, depth, cur = [], 0, []
    for ch in raw:
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    parts.append("".join(cur).strip())
    return [p for p in parts if p]


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = _split_values(args.values)
    if args.param in ("hidden_size", "time_steps"):
        values = [int(v) for v in values]
    elif args.param == "beta":
        values = [float(v) for v in values]
    sweep = SweepSpec(parameter=args.param, values=tuple(values), repeats=args.repeats)
    records = run_sweep(cfg, sweep)
    for rec in records:
        _print_record(rec)
    print(f"sweep over {sweep.parameter} (repeats={sweep.repeats}):")
    for row in summarize_sweep(records, sweep):
        print(f"  {row['value']}: accuracy {row['mean_accuracy']:.4f} "
              f"+/- {row['std_accuracy']:.4f} over {row['runs']} runs")
    if args.out:
        _emit(records, args.out)
    return 0


def cmd_compare(args) -> int:
    cmp = compare_methods(_load_config(args))
    print(f"{'method':<8} {'accuracy':>9} {'train_s':>10} {'features_s':>11}")
    for rec in (cmp.ransnn, cmp.sg):
        print(f"{rec.method:<8} {rec.final_accuracy:>9.4f} "
              f"{rec.training_seconds:>10.3f} {rec.feature_extraction_seconds:>11.3f}")
    print(f"training speedup: {cmp.speedup:.1f}x")
    if args.out:
        _emit([cmp.ransnn, cmp.sg], args.out)
    return 0


def cmd_inspect_idx(args) -> int:
    tensor = read_idx(args.path)
    size = tensor.data.size
    print(f"{args.path}: dtype=u8 (0x{tensor.dtype_code:02x}) dims={tensor.dims} "
          f"elements={size}")
    if size:
        print(f"value range: [{tensor.data.min()}, {tensor.data.max()}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ransnn",
        description="Benchmark runner for the random-hidden-layer spiking "
                    "classifier and its surrogate-gradient baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("--config", help="JSON config file")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--out", help="metrics output path (.csv or .json)")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="vary one parameter")
    sweep_p.add_argument("--config", help="JSON config file")
    sweep_p.add_argument("--seed", type=int, help="override the config seed")
    sweep_p.add_argument("--param", required=True,
                         choices=("beta", "hidden_size", "time_steps", "dist_param"))
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values; dist_param takes "
                              "literals like U(-0.05,0.05) or N(0,0.05)")
    sweep_p.add_argument("--repeats", type=int, default=3)
    sweep_p.add_argument("--out", help="metrics output path (.csv or .json)")
    sweep_p.set_defaults(func=cmd_sweep)

    cmp_p = sub.add_parser("compare", help="run both methods on one config")
    cmp_p.add_argument("--config", help="JSON config file")
    cmp_p.add_argument("--seed", type=int, help="override the config seed")
    cmp_p.add_argument("--out", help="metrics output path (.csv or .json)")
    cmp_p.set_defaults(func=cmd_compare)

    idx_p = sub.add_parser("inspect-idx", help="dump an IDX file header")
    idx_p.add_argument("path")
    idx_p.set_defaults(func=cmd_inspect_idx)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (IdxError, DatasetError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    main_entry()
