"""Upper bounds, exact formulas and the JSR bracket.

1. h_k:      averaged product norms, an upper bound on the p-radius for every k.
2. Exact:    ρ(N⁻¹ Σ A_i^{⊗p})^{1/p} for even p or entrywise nonnegative families.
3. Lift:     p-radius → 1-radius through Kronecker powers.
4. Bracket:  lower ≤ ρ_∞ ≤ upper from exhaustive products.

Products are enumerated level by level per first index; each first index is
an independent job and partial results are combined in index order.
"""

from __future__ import annotations
import logging
import math
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from app.config import settings
from app.exceptions import BudgetExceededError, ConeConditionError
from app.models.schemas import (
    BoundKind,
    BoundReport,
    MatrixFamily,
    RadiusBracket,
)
from app.services.linalg_core import (
    check_dimension,
    kron_power,
    operator_norms,
    spectral_radii,
    spectral_radius_with_residual,
)
from app.utils.helpers import ordered_map

logger = logging.getLogger(__name__)


# ── Enumeration ───────────────────────────────────────────────────────────

def check_budget(count: float, what: str = "products", budget: int | None = None) -> None:
    """Raise :class:`BudgetExceededError` when *count* items exceed the budget."""
    budget = settings.PRODUCT_BUDGET if budget is None else budget
    if count > budget:
        raise BudgetExceededError(count, budget, what)


def iter_levels(stack: np.ndarray, first: int, depth: int, log_q: Optional[np.ndarray] = None):
    """Yield ``(t, products, log_prob)`` for all length-t products starting with A_first.

    ``products[r] = A_{i_t} ⋯ A_{i_1}`` with ``i_1 = first``, rows in
    lexicographic order of ``(i_1, …, i_t)``. With a log-transition matrix
    *log_q* the chain log-probability of each product is tracked and
    zero-probability chains are dropped; otherwise ``log_prob`` is zeros.
    """
    count = stack.shape[0]
    products = stack[first][None]
    last = np.array([first])
    log_prob = np.zeros(1)
    yield 1, products, log_prob
    for t in range(2, depth + 1):
        products = np.matmul(stack[None, :], products[:, None]).reshape(-1, *stack.shape[1:])
        nxt = np.tile(np.arange(count), last.size)
        if log_q is not None:
            log_prob = (log_prob[:, None] + log_q[last]).reshape(-1)
            keep = np.isfinite(log_prob)
            products, nxt, log_prob = products[keep], nxt[keep], log_prob[keep]
        else:
            log_prob = np.zeros(nxt.size)
        last = nxt
        yield t, products, log_prob


def log_moment_sums(
    stack: np.ndarray,
    p: int,
    k_max: int,
    log_q: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``log Σ prob · ‖A_{i_t}⋯A_{i_1}‖^p`` over all products, for t = 1..k_max."""
    count = stack.shape[0]
    check_budget(float(count) ** k_max)

    def per_first(first: int) -> np.ndarray:
        out = np.full(k_max, -np.inf)
        for t, products, log_prob in iter_levels(stack, first, k_max, log_q):
            if products.shape[0] == 0:
                break
            with np.errstate(divide="ignore"):
                logs = p * np.log(operator_norms(products)) + log_prob
            out[t - 1] = logsumexp(logs)
        return out

    partial = np.stack(ordered_map(per_first, range(count)))
    return logsumexp(partial, axis=0)

# ── 1. Upper bounds h_k ───────────────────────────────────────────────────

def h_sequence(family: MatrixFamily, p: int, k_max: int) -> List[float]:
    """[h_1, …, h_{k_max}] with h_k = (N^{-k} Σ ‖A_{i_k}⋯A_{i_1}‖^p)^{1/(pk)}."""
    if p < 1 or k_max < 1:
        raise ValueError("p and k must be positive integers")
    sums = log_moment_sums(family.stack, p, k_max)
    log_n = math.log(family.count)
    return [float(np.exp((sums[k - 1] - k * log_n) / (p * k))) for k in range(1, k_max + 1)]


def h_k(family: MatrixFamily, p: int, k: int) -> float:
    """Averaged norm of all length-k products; an upper bound on ρ_p(family)."""
    return h_sequence(family, p, k)[-1]


def upper_reports(values: List[float], p: int, label: str = "h") -> List[BoundReport]:
    """Wrap an h_k sequence as upper-bound reports."""
    return [
        BoundReport(
            name=f"{label}_{k}",
            kind=BoundKind.UPPER,
            value=v,
            tolerance=settings.EIG_TOL,
            notes=f"averaged norm of length-{k} products, p={p}",
        )
        for k, v in enumerate(values, start=1)
    ]


def check_submultiplicative(values: List[float], tol: float = 1e-9) -> List[int]:
    """Return the k with h_{2k} > h_k + tol (impossible for correct values)."""
    bad = []
    for k in range(1, len(values) // 2 + 1):
        if values[2 * k - 1] > values[k - 1] + tol:
            bad.append(k)
    return bad

# ── 2. Exact formulas ─────────────────────────────────────────────────────

def averaged_kron_power(family: MatrixFamily, p: int) -> np.ndarray:
    """N⁻¹ Σ_i A_i^{⊗p}."""
    check_dimension(family.n ** p, f"Kronecker power of order {p}")
    acc = kron_power(family.members[0], p)
    for a in family.members[1:]:
        acc = acc + kron_power(a, p)
    return acc / family.count


def _exact_with_residual(family: MatrixFamily, p: int) -> tuple[float, float]:
    rho, residual = spectral_radius_with_residual(averaged_kron_power(family, p))
    return rho ** (1.0 / p), residual


def exact_even_p(family: MatrixFamily, p: int) -> float:
    """ρ_p for even p: ρ(N⁻¹ Σ A_i^{⊗p})^{1/p}."""
    if p < 2 or p % 2:
        raise ValueError(f"exact_even_p needs an even p, got {p}")
    return _exact_with_residual(family, p)[0]


def exact_invariant_cone(family: MatrixFamily, p: int) -> float:
    """ρ_p for families leaving the positive orthant invariant."""
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if not family.is_nonnegative():
        bad = next(i for i, a in enumerate(family.members) if np.any(a < 0.0))
        raise ConeConditionError(
            f"members[{bad}] has a negative entry; the invariant-cone formula does not apply"
        )
    return _exact_with_residual(family, p)[0]


def exact_p_radius(family: MatrixFamily, p: int) -> Optional[BoundReport]:
    """Exact p-radius when a closed form applies, else ``None``.

    The report carries the dominant eigenpair residual in ``meta`` and uses it
    as the tolerance when it is larger than the solver default.
    """
    if p % 2 == 0:
        reason = f"even p={p}"
    elif family.is_nonnegative():
        reason = "entrywise nonnegative family"
    else:
        return None
    value, residual = _exact_with_residual(family, p)
    return BoundReport(
        name=f"exact_rho_{p}",
        kind=BoundKind.EXACT,
        value=value,
        tolerance=max(settings.EIG_TOL, residual),
        notes=f"closed form ({reason})",
        meta={"residual": residual},
    )

# ── 3. Lift ───────────────────────────────────────────────────────────────

def lift_p_to_1(family: MatrixFamily, p: int) -> MatrixFamily:
    """{A_i^{⊗p}}: ρ_p(family) = ρ_1(lifted)^{1/p}."""
    if p == 1:
        return family
    check_dimension(family.n ** p, f"p={p} lift")
    return MatrixFamily(members=[kron_power(a, p) for a in family.members])

# ── 4. JSR bracket ────────────────────────────────────────────────────────

def jsr_bracket(family: MatrixFamily, depth: int | None = None) -> RadiusBracket:
    """max ρ(P)^{1/t} ≤ ρ_∞ ≤ min_t max ‖P‖^{1/t} over products up to length *depth*."""
    depth = settings.JSR_DEPTH if depth is None else depth
    if depth < 1:
        raise ValueError(f"depth must be positive, got {depth}")
    stack = family.stack
    check_budget(float(family.count) ** depth)

    def per_first(first: int) -> np.ndarray:
        out = np.zeros((depth, 2))
        for t, products, _ in iter_levels(stack, first, depth):
            out[t - 1, 0] = np.max(spectral_radii(products))
            out[t - 1, 1] = np.max(operator_norms(products))
        return out

    levels = np.max(np.stack(ordered_map(per_first, range(family.count))), axis=0)
    lower, upper = 0.0, math.inf
    history = []
    for t in range(1, depth + 1):
        lower = max(lower, float(levels[t - 1, 0]) ** (1.0 / t))
        upper = min(upper, float(levels[t - 1, 1]) ** (1.0 / t))
        history.append((lower, upper))
    logger.debug("jsr bracket depth=%d: [%.6g, %.6g]", depth, lower, upper)
    return RadiusBracket(lower=lower, upper=max(upper, lower), depth=depth, history=history)
