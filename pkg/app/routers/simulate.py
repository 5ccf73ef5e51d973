"""Simulation command:
    pradius simulate <file>   CSV of k, moment, stderr, rate_to_date plus a rate summary
"""

from __future__ import annotations
import argparse
import logging
import math
from typing import Optional

from app.exceptions import DegenerateEstimateError
from app.routers.bounds import resolve_p
from app.services.mc_simulator import empirical_rate, simulate
from app.services.problem_service import open_problem
from app.utils.helpers import positive_int, to_json, unit_fraction

logger = logging.getLogger(__name__)


def _rate_to_date(log_moment: float, k: int, p: int) -> float:
    """(E‖X(k)‖^p)^{1/(pk)}, the growth rate implied by step k alone."""
    if not math.isfinite(log_moment):
        return 0.0
    return math.exp(log_moment / (p * k))


def _finite(value) -> Optional[float]:
    """JSON-safe float: overflowed or vanished values become None."""
    value = float(value)
    return value if math.isfinite(value) else None


def run_simulate(args: argparse.Namespace) -> int:
    loaded = open_problem(args.file)
    p = resolve_p(args, loaded)
    ensemble = simulate(loaded.target, p, args.horizon, args.samples, seed=args.seed)
    try:
        estimate = empirical_rate(ensemble, args.tail)
    except DegenerateEstimateError as exc:
        logger.warning("no growth rate: %s", exc)
        estimate = None

    rows = [
        {
            "k": k,
            "moment": _finite(ensemble.per_step_moment[k]),
            "stderr": _finite(ensemble.per_step_stderr[k]),
            "log_moment": _finite(ensemble.log_moment[k]),
            "rate_to_date": _rate_to_date(float(ensemble.log_moment[k]), k, p),
        }
        for k in range(1, ensemble.horizon + 1)
    ]
    if args.json:
        print(to_json({
            "p": p,
            "samples": ensemble.samples,
            "seed": ensemble.rng_seed,
            "rows": rows,
            "rate": estimate.model_dump() if estimate is not None else None,
        }))
        return 0

    print("k,moment,stderr,rate_to_date")
    for row in rows:
        k = row["k"]
        moment, stderr = float(ensemble.per_step_moment[k]), float(ensemble.per_step_stderr[k])
        print(f"{k},{moment!r},{stderr!r},{row['rate_to_date']!r}")
    if estimate is None:
        print("# rate=undefined")
    else:
        print(f"# rate={estimate.rate!r} stderr={estimate.stderr!r} "
              f"window={estimate.tail_start}..{estimate.tail_end}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("simulate", parents=[common], help="Monte Carlo moments")
    parser.add_argument("--horizon", type=positive_int, default=30, help="steps per trajectory")
    parser.add_argument("--samples", type=positive_int, default=10_000, help="number of trajectories")
    parser.add_argument("--tail", type=unit_fraction, default=0.5, help="fraction of steps used for the rate fit")
    parser.set_defaults(handler=run_simulate)
