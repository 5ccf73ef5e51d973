"""Verdict command:
    pradius verdict <file>   stable / unstable / undetermined, exit 0 / 1 / 2
"""

from __future__ import annotations
import argparse
import logging

from app.routers.bounds import effort_from_args, emit_rows, resolve_p
from app.services.markov_radius import stability_verdict
from app.services.problem_service import open_problem
from app.utils.helpers import positive_int, round_display, to_json

logger = logging.getLogger(__name__)


def run_verdict(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    p = resolve_p(args, loaded)
    verdict = stability_verdict(loaded.target, p, effort_from_args(args), loaded.hint_weights())
    witness = verdict.witness.to_row() if verdict.witness is not None else None

    if args.json:
        print(to_json({
            "status": verdict.status.value,
            "p": verdict.p,
            "exit_code": verdict.exit_code,
            "best_lower": verdict.best_lower,
            "best_upper": verdict.best_upper,
            "witness": witness.model_dump() if witness is not None else None,
            "reports": [r.to_row().model_dump() for r in verdict.reports],
        }))
        return verdict.exit_code

    print(f"{verdict.status.value} (p={p})")
    if witness is not None:
        print(f"witness: {witness.name} = {round_display(witness.value)} ({witness.notes})")
    print(f"best lower: {round_display(verdict.best_lower)}  best upper: {round_display(verdict.best_upper)}")
    if args.verbose:
        print()
        emit_rows([r.to_row() for r in verdict.reports], as_json=False)
    return verdict.exit_code


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("verdict", parents=[common], help="p-th mean stability verdict")
    parser.add_argument("--grid", type=positive_int, default=None, help="scalar grid resolution")
    parser.add_argument("--restarts", type=positive_int, default=None, help="optimizer restarts (default 8)")
    parser.set_defaults(handler=run_verdict)
