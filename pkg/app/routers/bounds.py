"""Bound commands:
    pradius upper     <file>   h_1 … h_{k_max} (i.i.d. or Markov)
    pradius lower     <file>   hints, scalar, Zhou and optimized lower bounds
    pradius exact     <file>   closed-form p-radius and the JSR bracket
    pradius optimize  <file>   optimizer only, with per-restart summary
"""

from __future__ import annotations
import argparse
import logging
from typing import List, Sequence

from app.config import settings
from app.exceptions import InvariantViolationError
from app.models.schemas import (
    BoundKind,
    BoundReport,
    Effort,
    MarkovModel,
    OptimizerConfig,
    ReportRow,
)
from app.services.markov_radius import (
    LOWER_KINDS,
    exact_report,
    lower_bound_jobs,
    markov_optimize,
    upper_sequence,
)
from app.services.problem_service import LoadedProblem, open_problem
from app.services.radius_core import check_submultiplicative, jsr_bracket, upper_reports
from app.services.weight_optimizer import optimize
from app.utils.helpers import format_table, positive_int, round_display, to_json

logger = logging.getLogger(__name__)

# h_k may rise between adjacent k by this much before a warning is logged.
_ADJACENT_SLACK = 1e-9


# ── Shared output ─────────────────────────────────────────────────────────

def _witness_cell(row: ReportRow) -> str:
    if row.witness is None:
        return "—"
    weights = row.witness["weights"]
    m = len(weights[0][0]) if isinstance(weights[0][0][0], list) else len(weights[0])
    return f"{row.witness['certificate']} m={m}"


def emit_rows(rows: Sequence[ReportRow], as_json: bool) -> None:
    """Print report rows as a table or as a JSON array."""
    if as_json:
        print(to_json([row.model_dump() for row in rows]))
        return
    table = [
        (
            row.name,
            row.kind,
            round_display(row.value),
            "yes" if row.certified else "no",
            _witness_cell(row),
            row.notes,
        )
        for row in rows
    ]
    print(format_table(["bound", "kind", "value", "certified", "witness", "notes"], table))


def failed_row(name: str, kind: BoundKind, exc: Exception) -> ReportRow:
    return ReportRow(name=name, kind=kind.value, value=None, certified=False,
                     notes=f"error: {exc}")


def resolve_p(args: argparse.Namespace, loaded: LoadedProblem) -> int:
    return args.p if args.p is not None else loaded.problem.p


def effort_from_args(args: argparse.Namespace) -> Effort:
    restarts = getattr(args, "restarts", None)
    optimizer = OptimizerConfig(restarts=restarts or 8, rng_seed=args.seed)
    return Effort(
        k_max=args.k_max or settings.K_MAX,
        jsr_depth=args.depth or settings.JSR_DEPTH,
        grid_resolution=getattr(args, "grid", None) or settings.GRID_RESOLUTION,
        m=args.m,
        optimizer=optimizer,
    )

# ── upper ─────────────────────────────────────────────────────────────────

def checked_upper(loaded: LoadedProblem, p: int, k_max: int) -> List[BoundReport]:
    """h_k reports after the h_{2k} ≤ h_k guarantee is verified."""
    values = upper_sequence(loaded.target, p, k_max)
    bad = check_submultiplicative(values)
    if bad:
        k = bad[0]
        raise InvariantViolationError(
            f"h_{2 * k} = {values[2 * k - 1]!r} exceeds h_{k} = {values[k - 1]!r}"
        )
    for k in range(1, len(values)):
        if values[k] > values[k - 1] + _ADJACENT_SLACK:
            logger.warning("h_%d = %.12g exceeds h_%d = %.12g", k + 1, values[k], k, values[k - 1])
    label = "markov_h" if loaded.markov else "h"
    return upper_reports(values, p, label)


def run_upper(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    reports = checked_upper(loaded, resolve_p(args, loaded), args.k_max or settings.K_MAX)
    emit_rows([r.to_row() for r in reports], args.json)
    return 0

# ── lower ─────────────────────────────────────────────────────────────────

def _selected_kinds(args: argparse.Namespace) -> tuple[str, ...]:
    chosen = [kind for kind, flag in (("scalar", args.scalar), ("zhou", args.zhou),
                                      ("optimize", args.optimize)) if flag]
    if not chosen:
        return LOWER_KINDS
    return ("hints", *chosen)


def run_lower(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    p = resolve_p(args, loaded)
    effort = effort_from_args(args)
    rows: list[ReportRow] = []
    jobs = lower_bound_jobs(loaded.target, p, effort, loaded.hint_weights(),
                            kinds=_selected_kinds(args), q=args.q)
    for name, make in jobs:
        try:
            report = make()
        except ValueError as exc:
            logger.warning("%s failed: %s", name, exc)
            rows.append(failed_row(name, BoundKind.LOWER, exc))
            continue
        rows.append(report.to_row())
    emit_rows(rows, args.json)
    return 0

# ── exact ─────────────────────────────────────────────────────────────────

def run_exact(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    p = resolve_p(args, loaded)
    rows: list[ReportRow] = []
    try:
        report = exact_report(loaded.target, p)
    except ValueError as exc:
        rows.append(failed_row(f"exact_rho_{p}", BoundKind.EXACT, exc))
    else:
        if report is None:
            rows.append(ReportRow(name=f"exact_rho_{p}", kind=BoundKind.EXACT.value, value=None,
                                  certified=False,
                                  notes="no closed form: p is odd and the family has a negative entry"))
        else:
            rows.append(report.to_row())

    family = loaded.target.family if isinstance(loaded.target, MarkovModel) else loaded.target
    scope = "unconstrained switching" if loaded.markov else "all products"
    try:
        bracket = jsr_bracket(family, args.depth)
    except ValueError as exc:
        rows.append(failed_row("jsr_bracket", BoundKind.UPPER, exc))
    else:
        notes = f"depth {bracket.depth}, {scope}"
        rows.append(ReportRow(name="jsr_lower", kind=BoundKind.LOWER.value, value=bracket.lower,
                              certified=True, tolerance=settings.EIG_TOL, notes=notes))
        rows.append(ReportRow(name="jsr_upper", kind=BoundKind.UPPER.value, value=bracket.upper,
                              certified=True, tolerance=settings.EIG_TOL, notes=notes))
    emit_rows(rows, args.json)
    return 0

# ── optimize ──────────────────────────────────────────────────────────────

def run_optimize(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    target = loaded.target
    m = args.m or target.n
    config = OptimizerConfig(restarts=args.restarts or 32, rng_seed=args.seed)
    if isinstance(target, MarkovModel):
        report = markov_optimize(target, m, config)
    else:
        report = optimize(target, m, config)
    p = resolve_p(args, loaded)
    if p > 1:
        logger.info("optimize bounds rho_1, which is also a lower bound on rho_%d", p)

    if args.json:
        payload = report.to_row().model_dump()
        payload["restarts"] = [
            {"restart": i, "value": v}
            for i, v in enumerate(report.meta.get("restart_values", []))
        ]
        print(to_json(payload))
        return 0
    emit_rows([report.to_row()], as_json=False)
    values = report.meta.get("restart_values", [])
    if values:
        best = report.meta.get("best_restart")
        print()
        print(format_table(
            ["restart", "value", "best"],
            [(i, round_display(v), "*" if i == best else "") for i, v in enumerate(values)],
        ))
    return 0

# ── Registration ──────────────────────────────────────────────────────────

def register(subparsers, common: argparse.ArgumentParser) -> None:
    upper = subparsers.add_parser("upper", parents=[common], help="h_k upper bounds")
    upper.set_defaults(handler=run_upper)

    lower = subparsers.add_parser("lower", parents=[common], help="lower bounds with witnesses")
    lower.add_argument("--zhou", action="store_true", help="Zhou-type bound")
    lower.add_argument("--scalar", action="store_true", help="scalar-weight grid bound")
    lower.add_argument("--optimize", action="store_true", help="optimized m×m weights")
    lower.add_argument("--grid", type=positive_int, default=None, help="scalar grid resolution")
    lower.add_argument("--restarts", type=positive_int, default=None, help="optimizer restarts (default 8)")
    lower.set_defaults(handler=run_lower)

    exact = subparsers.add_parser("exact", parents=[common], help="closed form and JSR bracket")
    exact.set_defaults(handler=run_exact)

    opt = subparsers.add_parser("optimize", parents=[common], help="weight optimizer only")
    opt.add_argument("--restarts", type=positive_int, default=None, help="optimizer restarts (default 32)")
    opt.set_defaults(handler=run_optimize)
