"""Command-line entry point.

    python -m app <command> <problem.json> [flags]

The program is named `pradius` in help and usage output; `python -m app` is
the launcher.

Commands: upper, lower, exact, optimize, verdict, simulate. Reports go to
stdout; logs go to stderr.

Exit codes:
    0 / 1 / 2   verdict stable / unstable / undetermined (other commands: 0 on success)
    64          usage error, or a job larger than the product budget / dimension cap
    65          problem file could not be parsed or validated
    70          internal error (a numerical guarantee failed, or an unexpected exception)
"""

from __future__ import annotations
import argparse
import logging
import sys
from contextlib import contextmanager
from typing import Iterator, Optional, Sequence

from app.config import settings
from app.exceptions import (
    BudgetExceededError,
    DimensionCapError,
    InvariantViolationError,
    ProblemFileError,
)
from app.routers import bounds, simulate, verdict
from app.utils.helpers import positive_int, seed_value
from app.utils.performance import RunClock

EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_SOFTWARE = 70

# ── Logging ──────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s | %(levelname)-7s | %(name)s | %(message)s",
        stream=sys.stderr,
    )
    logging.getLogger().setLevel(logging.DEBUG if verbose else settings.LOG_LEVEL)

# ── Parser ───────────────────────────────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with 64 instead of 2 (2 means undetermined)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("file", help="problem file (JSON)")
    common.add_argument("--p", type=positive_int, default=None, help="moment order (default: file's p)")
    common.add_argument("--k-max", type=positive_int, default=None, help="longest product in h_k")
    common.add_argument("--m", type=positive_int, default=None, help="optimizer weight size (default n)")
    common.add_argument("--q", type=positive_int, default=1, help="product-family length for lower bounds")
    common.add_argument("--seed", type=seed_value, default=0, help="random seed")
    common.add_argument("--depth", type=positive_int, default=None, help="JSR bracket product length")
    common.add_argument("--budget", type=positive_int, default=None, help="max enumerated products")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="pradius", description="Bounds on the p-radius of matrix families.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    bounds.register(subparsers, common)
    verdict.register(subparsers, common)
    simulate.register(subparsers, common)
    return parser

# ── Per-run setting overrides ────────────────────────────────────────────

@contextmanager
def _overrides(args: argparse.Namespace) -> Iterator[None]:
    changes = {
        "PRODUCT_BUDGET": args.budget,
        "JSR_DEPTH": args.depth,
        "K_MAX": args.k_max,
    }
    saved = {name: getattr(settings, name) for name in changes}
    try:
        for name, value in changes.items():
            if value is not None:
                setattr(settings, name, value)
        yield
    finally:
        for name, value in saved.items():
            setattr(settings, name, value)

# ── Global error handler ─────────────────────────────────────────────────

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args.verbose)
    clock = RunClock()
    try:
        with _overrides(args):
            return args.handler(args)
    except ProblemFileError as exc:
        logger.error("%s: %s", args.file, exc)
        return EXIT_DATAERR
    except (BudgetExceededError, DimensionCapError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except InvariantViolationError as exc:
        logger.error("internal error: %s", exc)
        return EXIT_SOFTWARE
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_DATAERR
    except Exception as exc:
        logger.error("unhandled exception in %s: %s", args.command, exc, exc_info=True)
        return EXIT_SOFTWARE
    finally:
        clock.log_summary(args.command)


if __name__ == "__main__":
    sys.exit(main())
