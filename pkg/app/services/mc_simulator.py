"""Monte Carlo check of p-th mean growth rates.

Trajectories follow X(k+1) = A_{σ(k+1)} X(k) with X(0) = I, under i.i.d.
uniform or Markov switching. Each trajectory draws its uniforms from its own
``default_rng([seed, index])`` stream, so results do not depend on how the
work is split. Norms are accumulated in log form and averaged with
log-sum-exp, which keeps geometrically growing systems finite.
"""

from __future__ import annotations
import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import linregress

from app.config import settings
from app.exceptions import DegenerateEstimateError
from app.models.schemas import MarkovModel, MatrixFamily, RateEstimate, TrajectoryEnsemble
from app.services.linalg_core import operator_norms
from app.services.radius_core import check_budget, iter_levels
from app.utils.helpers import ordered_map

logger = logging.getLogger(__name__)

Target = Union[MatrixFamily, MarkovModel]

# Trajectories advanced together per vectorized block.
_BLOCK = 4096


def _initial_distribution(target: Target, initial_distribution: Optional[Sequence[float]]) -> np.ndarray:
    count = target.count
    if initial_distribution is None:
        return np.full(count, 1.0 / count)
    mu = np.asarray(initial_distribution, dtype=float)
    if mu.shape != (count,):
        raise ValueError(f"initial distribution must have {count} entries, got {mu.size}")
    if np.any(mu < 0.0) or not np.all(np.isfinite(mu)):
        raise ValueError("initial distribution entries must be nonnegative")
    if abs(mu.sum() - 1.0) > settings.DISTRIBUTION_TOL:
        raise ValueError(f"initial distribution sums to {mu.sum()!r}, expected 1")
    return mu


def _cumulative(rows: np.ndarray) -> np.ndarray:
    cum = np.cumsum(rows, axis=-1)
    # Exact 1.0 at the last positive entry so u ∈ [0, 1) never picks a zero-probability state.
    return cum / cum[..., -1:]


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; *cum* is (N,) or per-row (B, N)."""
    return np.sum(u[:, None] >= np.atleast_2d(cum), axis=1)


def _simulate_block(target: Target, p: int, horizon: int, seed: int, indices: range,
                    mu: np.ndarray) -> np.ndarray:
    """p·log‖X(k)‖ for k = 1..horizon, one row per trajectory."""
    stack = target.family.stack if isinstance(target, MarkovModel) else target.stack
    count, n = stack.shape[0], stack.shape[1]
    size = len(indices)
    uniforms = np.stack([np.random.default_rng([seed, idx]).random(horizon) for idx in indices])
    cum_mu = _cumulative(mu)
    cum_q = _cumulative(target.transition) if isinstance(target, MarkovModel) else None

    x = np.broadcast_to(np.eye(n), (size, n, n)).copy()
    log_scale = np.zeros(size)
    out = np.empty((size, horizon))
    state = None
    for k in range(horizon):
        u = uniforms[:, k]
        if k == 0 or cum_q is None:
            state = _draw(cum_mu, u) if cum_q is not None else np.minimum((u * count).astype(int), count - 1)
        else:
            state = _draw(cum_q[state], u)
        x = np.matmul(stack[state], x)
        norms = operator_norms(x)
        with np.errstate(divide="ignore"):
            log_scale = log_scale + np.log(norms)
        alive = norms > 0.0
        x[alive] /= norms[alive, None, None]
        x[~alive] = 0.0
        out[:, k] = p * log_scale
    return out


def simulate(
    target: Target,
    p: int,
    horizon: int,
    samples: int,
    seed: int = 0,
    initial_distribution: Optional[Sequence[float]] = None,
) -> TrajectoryEnsemble:
    """Empirical E‖X(k)‖^p for k = 0..horizon over *samples* trajectories.

    i.i.d. families switch uniformly; Markov models start from
    *initial_distribution* (uniform by default) and follow Q.
    """
    if p < 1 or horizon < 1 or samples < 1:
        raise ValueError("p, horizon and samples must be positive")
    markov = isinstance(target, MarkovModel)
    mu = _initial_distribution(target, initial_distribution if markov else None)
    blocks = [range(s, min(s + _BLOCK, samples)) for s in range(0, samples, _BLOCK)]
    logs = np.concatenate(ordered_map(
        lambda idx: _simulate_block(target, p, horizon, seed, idx, mu), blocks))

    log_n = math.log(samples)
    log_first = logsumexp(logs, axis=0) - log_n
    log_second = logsumexp(2.0 * logs, axis=0) - log_n
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(log_second - 2.0 * log_first)
        spread = np.where(np.isfinite(ratio), np.maximum(ratio - 1.0, 0.0), 0.0)
        factor = samples / (samples - 1) if samples > 1 else 0.0
        stderr = np.exp(log_first) * np.sqrt(spread * factor / samples)

    log_moment = np.concatenate([[0.0], log_first])
    with np.errstate(over="ignore"):
        moment = np.exp(log_moment)
    moment[0] = 1.0
    logger.debug("simulated %d trajectories to k=%d", samples, horizon)
    return TrajectoryEnsemble(
        p=p,
        horizon=horizon,
        samples=samples,
        rng_seed=seed,
        markov=markov,
        per_step_moment=moment,
        log_moment=log_moment,
        per_step_stderr=np.concatenate([[0.0], np.nan_to_num(stderr, nan=0.0)]),
    )


def exact_moments(
    target: Target,
    p: int,
    k_max: int,
    initial_distribution: Optional[Sequence[float]] = None,
) -> List[float]:
    """Exact E‖X(k)‖^p for k = 1..k_max by enumerating every switching path."""
    markov = isinstance(target, MarkovModel)
    stack = target.family.stack if markov else target.stack
    count = stack.shape[0]
    check_budget(float(count) ** k_max)
    mu = _initial_distribution(target, initial_distribution if markov else None)
    with np.errstate(divide="ignore"):
        log_q = np.log(target.transition) if markov else np.full((count, count), -math.log(count))
    totals = np.zeros(k_max)
    for first in range(count):
        if mu[first] == 0.0:
            continue
        for t, products, log_prob in iter_levels(stack, first, k_max, log_q):
            weights = mu[first] * np.exp(log_prob)
            totals[t - 1] += float(np.sum(weights * operator_norms(products) ** p))
    return totals.tolist()


def empirical_rate(ensemble: TrajectoryEnsemble, tail_fraction: float = 0.5) -> RateEstimate:
    """Growth rate exp(slope / p) of log moments over the last *tail_fraction* of steps."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    horizon = ensemble.horizon
    start = max(1, horizon - int(math.floor(tail_fraction * horizon)) + 1)
    ks = np.arange(start, horizon + 1)
    if ks.size < 2:
        raise DegenerateEstimateError(f"tail window {start}..{horizon} has fewer than 2 points")
    ys = ensemble.log_moment[start:]
    if not np.all(np.isfinite(ys)):
        raise DegenerateEstimateError("moments vanish in the tail window; no growth rate")
    fit = linregress(ks, ys)
    rate = math.exp(fit.slope / ensemble.p)
    stderr = rate * float(fit.stderr) / ensemble.p
    return RateEstimate(rate=rate, stderr=stderr, tail_start=int(start), tail_end=horizon,
                        slope=float(fit.slope))
