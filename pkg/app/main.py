"""
Command-line entry point
Entry point for the damped wave laboratory: `run <config>` and `report <dir>`
"""
import argparse
import logging
import sys
from typing import List, Optional

from app.cli import report, run
from app.core.config import settings
from app.core.exceptions import LabError
from app.core.logging import configure_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwlab",
        description=f"{settings.APP_NAME} v{settings.APP_VERSION}: numerical checks of damped wave resolvent "
                    "scalings, local decay, asymptotic profiles and conjugate-operator hypotheses",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: DWLAB_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Commands
    run.register(subparsers)
    report.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch

    Exit codes: 0 no VIOLATION, 1 VIOLATION or lab error, 2 config error, 3 missing artifacts.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except LabError as exc:
        # exit code travels with the error class
        print(f"error: {exc}", file=sys.stderr)
        if settings.DEBUG:
            logger.exception("%s failed", args.command)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
