"""
Command-line interface.

Usage:
    trendlab run configs/sample_naive.ini
    trendlab run configs/sample_xlstm.ini --jobs 2 --seed 3
    trendlab denoise configs/sample_xlstm.ini --levels 3
    trendlab train configs/sample_xlstm.ini --max-epochs 1
    trendlab evaluate configs/sample_xlstm.ini
    trendlab report runs/

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from trendlab.config import ExperimentConfig, load_config, load_environment, with_overrides
from trendlab.errors import ConfigError, DependencyError, TrendLabError
from trendlab.logging_setup import configure_logging
from trendlab.pipeline import run_experiment, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--verbose", action="store_true", help="Debug logging and tracebacks on failure")
    parser.add_argument("--no-logging", action="store_true", help="Only warnings and errors")


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="Experiment INI file")
    parser.add_argument("--seed", type=int, help="Override the experiment seed")
    parser.add_argument("--jobs", type=int, help="Runs executed in parallel")
    parser.add_argument("--out-dir", help="Artifact directory (default: runs/ or TRENDLAB_OUT_DIR)")
    parser.add_argument("--run", dest="run_name", help="Only execute the run with this name")
    parser.add_argument("--max-epochs", type=int, help="Override train.max_epochs")
    parser.add_argument("--learning-rate", type=float, help="Override train.learning_rate")
    parser.add_argument("--batch-size", type=int, help="Override train.batch_size")
    parser.add_argument("--levels", type=int, help="Override denoise.levels")
    _add_common(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trendlab",
        description="Wavelet-denoised next-step forecasting experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s run configs/sample_naive.ini
  %(prog)s train configs/sample_xlstm.ini --max-epochs 1
  %(prog)s report runs/
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    _add_run_options(commands.add_parser("run", help="Denoise, train and evaluate every run"))
    for stage, text in (("denoise", "Read, split and denoise the dataset"),
                        ("train", "Train on the denoised series"),
                        ("evaluate", "Score the trained model against the original prices")):
        _add_run_options(commands.add_parser(stage, help=text))
    report = commands.add_parser("report", help="Collect evaluations into report.md")
    report.add_argument("out_dir", help="Directory holding run results")
    report.add_argument("--title", default="Forecast evaluation")
    _add_common(report)
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config, seed=args.seed, out_dir=args.out_dir, jobs=args.jobs)


def _execute(args: argparse.Namespace) -> int:
    if args.command == "report":
        path = write_report(Path(args.out_dir), title=args.title)
        print(f"Report written to {path}")
        return EXIT_OK

    config = _load(args)
    runs = [with_overrides(run, args.max_epochs, args.learning_rate, args.batch_size, args.levels)
            for run in config.select(args.run_name)]
    stage = None if args.command == "run" else args.command
    outcomes = asyncio.run(run_experiment(runs, config.out_dir, config.jobs, stage))

    for outcome in outcomes:
        status = "ok" if outcome.ok else f"FAILED ({outcome.error})"
        print(f"{outcome.name}: {status} -> {outcome.run_dir}")
    if args.command == "run" and any(o.ok for o in outcomes):
        print(f"Report written to {write_report(config.out_dir, title=config.name)}")
    failures = [o for o in outcomes if not o.ok]
    if not failures:
        return EXIT_OK
    if all(o.error and o.error.startswith(("DependencyError", "ConfigError", "FileNotFoundError"))
           for o in failures):
        return EXIT_USAGE
    return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    load_environment()
    configure_logging(verbose=args.verbose, enabled=not args.no_logging)
    try:
        return _execute(args)
    except (ConfigError, DependencyError, FileNotFoundError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_USAGE
    except TrendLabError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001
        print(f"Unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
