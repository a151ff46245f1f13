"""``ghostnoise`` command-line entry point."""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, build_dataset, load_config
from .harness.data import IdxFormatError
from .harness.experiment import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    SweepCell,
    SweepResult,
    run_experiment,
    run_rows,
    sweep,
    table_csv,
    table_json,
)
from .probe import HISTOGRAM_COLUMNS, PROBE_COLUMNS, run_probe
from .traces import write_traces
from .verify import FAULTS, run_invariants

VERIFY_COLUMNS = ["invariant", "trials", "worst_residual", "threshold", "passed"]


def write_table(out_dir: Path, name: str, rows, columns, fmt: str) -> Path:
    path = out_dir / f"{name}.{fmt}"
    path.write_text(table_csv(rows, columns) if fmt == "csv" else table_json(rows))
    return path


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _train_config(cfg: ExperimentConfig, args):
    train = cfg.train
    if args.seed is not None:
        train = dataclasses.replace(train, seed=args.seed)
    return train


def cmd_verify(args) -> int:
    cfg = _config(args)
    trials = args.trials if args.trials is not None else cfg.verify.trials
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    seed = args.seed if args.seed is not None else 0
    print(f"seed: {seed}")
    results = run_invariants(trials, seed, args.inject_fault)
    rows = [{"invariant": r.name, "trials": r.trials, "worst_residual": r.worst, "threshold": r.threshold,
             "passed": r.passed} for r in results]
    path = write_table(_out_dir(args), "verify_report", rows, VERIFY_COLUMNS, args.format)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} trials={r.trials} worst={r.worst:.3e} "
              f"threshold={r.threshold:.1e}")
    print(f"report: {path}")
    return 0 if all(r.passed for r in results) else 1


def cmd_dist(args) -> int:
    cfg = _config(args)
    seed = args.seed if args.seed is not None else 0
    print(f"seed: {seed}")
    try:
        result = run_probe(cfg.dist, seed)
    except ValueError as exc:
        raise ConfigError(f"dist: {exc}") from exc
    out = _out_dir(args)
    write_table(out, "dist_report", result.rows, PROBE_COLUMNS, args.format)
    write_table(out, "dist_histograms", result.histograms, HISTOGRAM_COLUMNS, args.format)
    for r in result.rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['quantity']} analytical={r['analytical']:.5g} "
              f"empirical={r['empirical']:.5g} ks_d={r['ks_d']:.4f}")
    return 0 if result.passed else 1


def _single_run(args, trace_default=()):
    cfg = _config(args)
    train = _train_config(cfg, args)
    if trace_default and not train.trace_epochs:
        train = dataclasses.replace(train, trace_epochs=trace_default)
    print(f"seed: {train.seed}")
    data = build_dataset(cfg.data, train.eval_fraction)
    spec = cfg.mlp_spec(data)
    metrics = run_experiment(spec, train, data)
    cell = SweepCell("run", train.seed, metrics)
    out = _out_dir(args)
    write_table(out, "metrics", run_rows([cell]), RUN_COLUMNS, args.format)
    write_table(out, "summary", SweepResult("run", [cell]).summary(), SUMMARY_COLUMNS, args.format)
    print(f"final val_acc={metrics.final_val_acc:.4f} test_acc={metrics.test_acc:.4f} diverged={metrics.diverged}")
    return metrics, out


def cmd_train(args) -> int:
    _single_run(args)
    return 0


def cmd_noise_stats(args) -> int:
    metrics, out = _single_run(args, trace_default=(1, -1))
    if not metrics.traces:
        raise ConfigError("model: noise-stats needs at least one gni or agni injector")
    paths = write_traces(metrics.traces, out / "traces", args.format)
    print(f"wrote {len(paths)} trace files to {out / 'traces'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    seeds = tuple(cfg.sweep.seeds)
    if args.seed is not None:
        seeds = tuple(args.seed + k for k in range(len(seeds)))
    print(f"seed: {seeds[0] if seeds else ''} seeds: {' '.join(map(str, seeds))}")
    data = build_dataset(cfg.data, cfg.train.eval_fraction)
    spec = cfg.mlp_spec(data)
    try:
        result = sweep(spec, cfg.train, data, cfg.sweep.axis, list(cfg.sweep.values), seeds, args.parallel)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    out = _out_dir(args)
    write_table(out, "runs", run_rows(result.cells), RUN_COLUMNS, args.format)
    summary = result.summary()
    write_table(out, "summary", summary, SUMMARY_COLUMNS, args.format)
    for row in summary:
        print(f"{cfg.sweep.axis}={row['axis_value']} val_acc={row['mean_val_acc']:.4f}+-{row['std_val_acc']:.4f}")
    return 0


COMMANDS = {"verify": cmd_verify, "dist": cmd_dist, "train": cmd_train, "sweep": cmd_sweep,
            "noise-stats": cmd_noise_stats}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghostnoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "verify":
            p.add_argument("--trials", type=int, help="trials per invariant")
            p.add_argument("--inject-fault", choices=FAULTS, default="none", help=argparse.SUPPRESS)
        if name == "sweep":
            p.add_argument("--parallel", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IdxFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
