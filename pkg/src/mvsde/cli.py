"""Command line entry point: mvsde <experiment> --config <path> [options].

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(blow-up or non-convergence), 4 failed acceptance checks under --check.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment
from .paths import GridError, MemoryBudgetError
from .picard import PicardNonConvergence
from .simulator import BlowUpError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsde",
        description="Convergence experiments for mean-field interacting particle systems.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", required=True, help="path to the experiment config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: config, then MVSDE_THREADS, then 1)",
    )
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--check", action="store_true", help="exit 4 unless all result checks pass")
    parser.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return parser


def _resolve_threads(flag: int | None, config_threads: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    if config_threads is not None:
        return max(1, config_threads)
    env = os.environ.get("MVSDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MVSDE_THREADS = {env!r} is not an integer") from None
    return 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(
                f"config declares experiment {cfg.experiment!r} but {args.experiment!r} was requested"
            )
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        threads = _resolve_threads(args.threads, cfg.threads)
    except (ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        outcome = run_experiment(cfg, threads=threads, make_plots=not args.no_plots)
    except (ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, PicardNonConvergence, MemoryBudgetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"{cfg.experiment}: wrote {', '.join(outcome.files)} to {outcome.out_dir}")
    for name, check in outcome.checks.items():
        state = "PASS" if check["passed"] else "FAIL"
        print(f"  check {name}: {state} ({check['requirement']})")
    if args.check and outcome.failed_checks:
        print(f"checks failed: {', '.join(outcome.failed_checks)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
