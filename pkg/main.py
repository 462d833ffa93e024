import argparse
import os
import sys
from typing import List, Optional

from config import collect_diagnostics, load_config, read_raw
from errors import ConfigurationError, ConfigValidationError, LabError
from experiment_runner import ExperimentRunner
from utils import attach_run_log, detach_handler, ensure_dir, setup_logger

logger = setup_logger("Main")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def parse_args(argv: Optional[List[str]] = None):
    parser = argparse.ArgumentParser(
        description="Condensate kinetics and superfluidity experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run the experiment described by a config file")
    run_parser.add_argument("config", help="Path to config file (.json, .yaml)")
    run_parser.add_argument("--output", help="Output directory (overrides output_dir)")
    run_parser.add_argument(
        "--report-format",
        choices=["markdown", "html"],
        help="Report format (overrides report_format)",
    )
    run_parser.add_argument(
        "--no-progress", action="store_true", help="Disable the evolution progress bar"
    )

    validate_parser = subparsers.add_parser(
        "validate", help="List every violated setting of a config file"
    )
    validate_parser.add_argument("config", help="Path to config file (.json, .yaml)")

    return parser.parse_args(argv)


def validate(path: str) -> int:
    try:
        raw, text = read_raw(path)
        diagnostics = collect_diagnostics(raw, text)
    except ConfigValidationError as e:
        diagnostics = e.diagnostics
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        return EXIT_INVALID

    for diagnostic in diagnostics:
        print(f"{path}: {diagnostic}")
    if diagnostics:
        logger.error(f"{len(diagnostics)} invalid setting(s) in {path}")
        return EXIT_INVALID
    logger.info(f"{path}: configuration is valid")
    return EXIT_OK


def run(path: str, output: Optional[str] = None, report_format: Optional[str] = None, progress: bool = True) -> int:
    try:
        cfg = load_config(path)
    except ConfigValidationError as e:
        for diagnostic in e.diagnostics:
            logger.error(f"{path}: {diagnostic}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        return EXIT_INVALID

    # Override config with CLI args
    if output:
        cfg.output_dir = output
    if report_format:
        cfg.report_format = report_format
    if not progress:
        cfg.evolution.progress = False

    try:
        ensure_dir(cfg.output_dir)
        handler = attach_run_log(os.path.join(cfg.output_dir, "run.log"))
    except OSError as e:
        logger.error(f"Cannot write to {cfg.output_dir}: {e}")
        return EXIT_INVALID
    try:
        ExperimentRunner(cfg).run()
    except ConfigurationError as e:
        logger.error(f"Invalid configuration [{e.module}]: {e}")
        return EXIT_INVALID
    except LabError as e:
        logger.critical(f"Numerical failure [{e.module}]: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O failure while writing {cfg.output_dir}: {e}")
        return EXIT_INVALID
    except (ValueError, TypeError) as e:
        logger.error(f"Run rejected [{type(e).__name__}]: {e}")
        return EXIT_INVALID
    finally:
        detach_handler(handler)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    if args.command == "validate":
        return validate(args.config)
    return run(args.config, args.output, args.report_format, progress=not args.no_progress)


if __name__ == "__main__":
    sys.exit(main())
