"""Command line entry point: ``run``, ``check`` and ``fit``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .harness import (
    POLICIES,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    FitError,
    emit_results,
    read_curves,
    run_experiment,
    sublinearity_check,
    with_overrides,
)

log = logging.getLogger("nsrmab")


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    policies = tuple(args.policy) if args.policy else None
    config = with_overrides(config, runs=args.runs, seed=args.seed, out=args.out, policies=policies)
    config.validate()
    out = Path(config.out)
    start = time.perf_counter()
    result = run_experiment(config, workers=args.workers, partial_path=out / "partial_records.csv")
    summary, curves = emit_results(result, out)
    log.info("finished %d runs in %.1fs", config.runs, time.perf_counter() - start)
    for p in config.policies:
        mean, std = result.final(p)
        print(f"{p:>10s}  Reg(T) = {mean:.6g}  (std {std:.6g})")
    print(f"wrote {summary} and {curves}")
    return 0


def _cmd_check(args) -> int:
    config = ExperimentConfig.load(args.config)
    print(f"{args.config}: ok ({config.family}, N={config.N}, M={config.M}, H={config.H}, "
          f"T={config.T}, runs={config.runs}, drift window={config.drift_window()})")
    return 0


def _cmd_fit(args) -> int:
    curves = read_curves(args.curves)
    names = args.policy or sorted(curves)
    missing = [p for p in names if p not in curves]
    if missing:
        raise ConfigError(f"{args.curves} has no curve for {missing}")
    for p in names:
        print(f"{p}: slope {sublinearity_check(curves[p]):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsrmab", description="Non-stationary restless bandit benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write summary.csv and curves.csv")
    run.add_argument("config", help="YAML experiment config")
    run.add_argument("--runs", type=int, help="number of independent runs")
    run.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    run.add_argument("--policy", action="append", choices=POLICIES,
                     help="only run this policy (repeatable)")
    run.set_defaults(func=_cmd_run)

    check = sub.add_parser("check", help="validate a config file")
    check.add_argument("config")
    check.set_defaults(func=_cmd_check)

    fit = sub.add_parser("fit", help="fit the log-log regret slope of a curves.csv")
    fit.add_argument("curves")
    fit.add_argument("--policy", action="append", help="policy to fit (repeatable; default all)")
    fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
