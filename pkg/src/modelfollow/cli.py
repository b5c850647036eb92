"""Command line entry point: ``run``, ``compare`` and ``validate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    CASES,
    CONTROLLERS,
    ConfigError,
    compare_runs,
    config_hash,
    dump_config,
    load_config,
    metrics_path_for,
    read_metrics,
    run_experiment,
    write_metrics,
)
from .learner import PlantDivergenceError, PolicyExtractionError

EXIT_CONFIG = 2
EXIT_RUN = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modelfollow", description="Model-following RL experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its trace and metrics")
    run.add_argument("--config", required=True)
    run.add_argument("--case", choices=CASES)
    run.add_argument("--controller", choices=CONTROLLERS)
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--out", help="trace CSV path; metrics go next to it as <stem>_metrics.csv")

    cmp_ = sub.add_parser("compare", help="tabulate metrics files from runs on the same case")
    cmp_.add_argument("metrics", nargs="+")
    cmp_.add_argument("--csv", help="also write the table as CSV")

    val = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    val.add_argument("--config", required=True)
    return p


def _run(args) -> int:
    cfg = load_config(args.config, case=args.case, controller=args.controller, seed=args.seed,
                      steps=args.steps, out_path=args.out)
    try:
        metrics = run_experiment(cfg)
    except (PlantDivergenceError, PolicyExtractionError, FloatingPointError) as exc:
        print(f"run aborted: {exc}; partial trace kept at {cfg.out_path}", file=sys.stderr)
        return EXIT_RUN
    mpath = metrics_path_for(cfg.out_path)
    write_metrics([metrics], mpath)
    print(f"trace: {cfg.out_path}\nmetrics: {mpath}")
    print(f"rms_error={metrics.rms_error:.6g} rms_error_last10={metrics.rms_error_last10:.6g} "
          f"steady_state_offset={metrics.steady_state_offset:.6g} converged={metrics.converged} "
          f"convergence_step={metrics.convergence_step}")
    return 0


def _compare(args) -> int:
    runs = [m for path in args.metrics for m in read_metrics(path)]
    try:
        table = compare_runs(runs)
    except ValueError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(table.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    return 0


def _validate(args) -> int:
    cfg = load_config(args.config)
    print(f"# config_hash: {config_hash(cfg)}")
    print(dump_config(cfg), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _run, "compare": _compare, "validate": _validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
