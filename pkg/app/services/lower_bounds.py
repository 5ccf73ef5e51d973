"""Lower bounds on the 1-radius (and, through the Kronecker lift, the p-radius).

1. λ_W:            ρ(N⁻¹ Σ W_i ⊗ A_i) for a weight set with ρ_∞(W) ≤ 1.
2. Zhou bound:     ρ(Σ A_i ⊗ A_i) / (N · ρ_∞ upper estimate).
3. Scalar bound:   best λ over scalar weights w ∈ [−1, 1]^N.
4. Product family: bounds on 𝓜^q give bounds on 𝓜 after a q-th root.
5. Complex weights: real embedding T_W.
"""

from __future__ import annotations
import itertools
import logging
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import block_diag

from app.config import settings
from app.exceptions import BudgetExceededError
from app.models.schemas import (
    BoundKind,
    BoundReport,
    Certificate,
    MatrixFamily,
    Validity,
    WeightSet,
)
from app.services.linalg_core import (
    as_matrix,
    batched_kron,
    block_matrix,
    check_dimension,
    kron,
    operator_norms,
    spectral_radii,
    spectral_radius,
)
from app.services.radius_core import check_budget, iter_levels, jsr_bracket
from app.utils.helpers import ordered_map

logger = logging.getLogger(__name__)

WeightsLike = Union[WeightSet, Sequence[np.ndarray]]

# Max floats materialized per batched evaluation chunk.
_CHUNK_FLOATS = 4_000_000


# ── 1. λ_W ────────────────────────────────────────────────────────────────

def weighted_average(family: MatrixFamily, weights: WeightsLike) -> np.ndarray:
    """N⁻¹ Σ_i W_i ⊗ A_i."""
    mats = weights.weights if isinstance(weights, WeightSet) else tuple(np.asarray(w) for w in weights)
    if len(mats) != family.count:
        raise ValueError(f"weight count {len(mats)} does not match family size {family.count}")
    check_dimension(mats[0].shape[0] * family.n, "weighted Kronecker average")
    acc = kron(mats[0], family.members[0])
    for w, a in zip(mats[1:], family.members[1:]):
        acc = acc + kron(w, a)
    return acc / family.count


def lambda_w(family: MatrixFamily, weights: WeightsLike) -> float:
    """ρ(N⁻¹ Σ W_i ⊗ A_i); a lower bound on ρ_1 when the weights are certified."""
    return spectral_radius(weighted_average(family, weights))


def batched_lambda(family: MatrixFamily, weight_stacks: np.ndarray) -> np.ndarray:
    """λ for a batch of weight sets shaped ``(B, N, m, m)``."""
    batch, count, m, _ = weight_stacks.shape
    dim = m * family.n
    check_dimension(dim, "weighted Kronecker average")
    members = family.stack
    chunk = max(1, _CHUNK_FLOATS // (count * dim * dim))
    out = np.empty(batch)
    for start in range(0, batch, chunk):
        part = weight_stacks[start:start + chunk]
        summed = batched_kron(part, members[None]).sum(axis=1) / count
        out[start:start + chunk] = spectral_radii(summed)
    return out


def certify_weights(weights: WeightSet, depth: int | None = None) -> WeightSet:
    """Attach the strongest certificate the weights earn.

    norm_bounded if every ‖W_i‖ ≤ 1, else bracket_checked if the JSR bracket
    upper end is ≤ 1, else unchecked.
    """
    tol = settings.NORM_TOL
    if float(np.max(operator_norms(weights.stack))) <= 1.0 + tol:
        return WeightSet(weights=weights.weights, certificate=Certificate.NORM_BOUNDED)
    try:
        bracket = jsr_bracket(MatrixFamily(members=weights.weights), depth)
    except BudgetExceededError:
        logger.warning("weight certificate check skipped: bracket over budget")
        return WeightSet(weights=weights.weights, certificate=Certificate.UNCHECKED)
    if bracket.upper <= 1.0 + tol:
        return WeightSet(weights=weights.weights, certificate=Certificate.BRACKET_CHECKED)
    return WeightSet(weights=weights.weights, certificate=Certificate.UNCHECKED)


def normalize_weights(weights: WeightSet) -> WeightSet:
    """Divide by the largest operator norm so the set becomes norm-bounded."""
    top = float(np.max(operator_norms(weights.stack)))
    scale = top if top > 1.0 else 1.0
    return WeightSet(weights=[w / scale for w in weights.weights], certificate=Certificate.NORM_BOUNDED)


def weights_bound(family: MatrixFamily, weights: WeightSet, name: str = "lambda_W") -> BoundReport:
    """λ_W as a report; certified iff the weights carry a certificate."""
    value = lambda_w(family, weights)
    return BoundReport(
        name=name,
        kind=BoundKind.LOWER,
        value=value,
        validity=Validity.CERTIFIED if weights.certificate.is_valid else Validity.HEURISTIC,
        witness=weights,
        notes=f"weights m={weights.m}, certificate={weights.certificate.value}",
    )


def pad_weights(weights: WeightSet, m_prime: int) -> WeightSet:
    """Zero-pad every W_i to block-diag(W_i, 0) of size m′."""
    if m_prime < weights.m:
        raise ValueError(f"cannot pad {weights.m}×{weights.m} weights down to {m_prime}")
    extra = np.zeros((m_prime - weights.m, m_prime - weights.m))
    padded = [block_diag(w, extra) if extra.size else w for w in weights.weights]
    return WeightSet(weights=padded, certificate=weights.certificate)

# ── 2. Zhou bound ─────────────────────────────────────────────────────────

def zhou_seed(family: MatrixFamily, jsr_upper: float) -> WeightSet:
    """{A_i / jsr_upper}: ρ_∞ ≤ 1 whenever jsr_upper bounds ρ_∞ from above."""
    return WeightSet(
        weights=[a / jsr_upper for a in family.members],
        certificate=Certificate.BRACKET_CHECKED,
    )


def zhou_bound(family: MatrixFamily, jsr_upper: float, bracket=None) -> BoundReport:
    """ρ(Σ A_i ⊗ A_i) / (N · jsr_upper), certified when jsr_upper ≥ ρ_∞.

    Only jsr_upper ≥ max ρ(A_i) is checked here; without *bracket* the caller
    vouches for jsr_upper, and the report records ``jsr_source="caller"``.
    """
    if not jsr_upper > 0.0:
        raise ValueError(f"jsr_upper must be positive, got {jsr_upper}")
    floor = max(spectral_radii(family.stack))
    if jsr_upper < floor * (1.0 - 1e-12):
        raise ValueError(
            f"jsr_upper {jsr_upper!r} is below max ρ(A_i) = {floor!r}, so it cannot bound ρ_∞"
        )
    seed = zhou_seed(family, jsr_upper)
    value = lambda_w(family, seed)
    meta = {"jsr_upper": jsr_upper, "jsr_source": "caller"}
    notes = f"uses rho_inf <= {jsr_upper:.6g} as supplied by the caller (not re-checked)"
    if bracket is not None:
        meta.update({"jsr_source": "bracket", "jsr_lower": bracket.lower, "jsr_depth": bracket.depth})
        notes = f"uses rho_inf <= {jsr_upper:.6g} from a depth-{bracket.depth} bracket"
    return BoundReport(
        name="zhou",
        kind=BoundKind.LOWER,
        value=value,
        witness=seed,
        notes=notes,
        meta=meta,
    )


def zhou_from_bracket(family: MatrixFamily, depth: int | None = None) -> BoundReport:
    """Zhou bound using the upper end of a freshly computed JSR bracket."""
    bracket = jsr_bracket(family, depth)
    return zhou_bound(family, bracket.upper, bracket)

# ── 3. Scalar weights ─────────────────────────────────────────────────────

def search_unit_box(
    objective: Callable[[np.ndarray], np.ndarray],
    dim: int,
    resolution: int,
    exhaustive: bool = True,
    rng_seed: int = 0,
    starts: int = 16,
) -> tuple[float, np.ndarray]:
    """Maximize a batched objective over w ∈ [−1, 1]^dim with w_0 ≥ 0.

    Exhaustive grid followed by coordinate-ascent polish on the grid
    spacing, halving down to 1e-6. The grid is coarsened until it fits the
    product budget; below three points per axis the search falls back to
    multi-start coordinate ascent. Ties go to the lexicographically smallest
    vector.
    """
    if resolution < 2:
        raise ValueError(f"grid_resolution must be at least 2, got {resolution}")

    def grid_size(g: int) -> int:
        return (g // 2 + 1) * g ** (dim - 1)

    requested = resolution
    while exhaustive and resolution > 3 and grid_size(resolution) > settings.PRODUCT_BUDGET:
        resolution -= 2 if resolution % 2 else 1
    if resolution != requested:
        logger.info("scalar grid coarsened from %d to %d points per axis to fit the budget",
                    requested, resolution)
    axis = np.linspace(-1.0, 1.0, resolution)
    first_axis = axis[axis >= 0.0]
    size = first_axis.size * resolution ** (dim - 1)
    if exhaustive and size <= settings.PRODUCT_BUDGET:
        best_val, best_w = -math.inf, None
        chunk = max(1, _CHUNK_FLOATS // max(dim, 1) // 8)
        grid = itertools.product(first_axis, *([axis] * (dim - 1)))
        while True:
            block = np.array(list(itertools.islice(grid, chunk)))
            if block.size == 0:
                break
            vals = objective(block)
            idx = int(np.argmax(vals))
            if vals[idx] > best_val:
                best_val, best_w = float(vals[idx]), block[idx].copy()
        candidates = [best_w]
    else:
        if exhaustive:
            logger.info("scalar grid of %d points exceeds budget; using coordinate ascent", size)
        rng = np.random.default_rng(rng_seed)
        candidates = [np.ones(dim)] + [rng.uniform(-1.0, 1.0, dim) for _ in range(starts - 1)]
        for c in candidates:
            c[0] = abs(c[0])
    polished = ordered_map(lambda w: _coordinate_ascent(objective, w, 2.0 / (resolution - 1)), candidates)
    best_val, best_w = -math.inf, None
    for val, w in polished:
        if val > best_val or (val == best_val and tuple(w) < tuple(best_w)):
            best_val, best_w = val, w
    return best_val, best_w


def _coordinate_ascent(objective, start: np.ndarray, step: float, min_step: float = 1e-6):
    w = start.copy()
    val = float(objective(w[None])[0])
    while step >= min_step:
        trials = []
        for i in range(w.size):
            for delta in (-step, step):
                t = w.copy()
                t[i] = np.clip(t[i] + delta, 0.0 if i == 0 else -1.0, 1.0)
                trials.append(t)
        trials = np.array(trials)
        vals = objective(trials)
        idx = int(np.argmax(vals))
        if vals[idx] > val:
            val, w = float(vals[idx]), trials[idx]
        else:
            step /= 2.0
    return val, w


def scalar_weight_bound(family: MatrixFamily, grid_resolution: int | None = None) -> BoundReport:
    """max over w ∈ [−1, 1]^N of ρ(N⁻¹ Σ w_i A_i); certified because |w_i| ≤ 1."""
    resolution = settings.GRID_RESOLUTION if grid_resolution is None else grid_resolution
    members = family.stack
    count = family.count

    def objective(ws: np.ndarray) -> np.ndarray:
        return spectral_radii(np.einsum("bi,ijk->bjk", ws, members) / count)

    _, w = search_unit_box(
        objective, count, resolution, exhaustive=count <= settings.SCALAR_GRID_MAX_N,
    )
    witness = WeightSet.scalars(w)
    return BoundReport(
        name="scalar",
        kind=BoundKind.LOWER,
        value=lambda_w(family, witness),
        witness=witness,
        notes=f"scalar weights {np.round(w, 6).tolist()}",
        meta={"weights": w.tolist(), "grid_resolution": resolution},
    )

# ── 4. Product families ───────────────────────────────────────────────────

def product_family(family: MatrixFamily, q: int) -> MatrixFamily:
    """All N^q products A_{i_q}⋯A_{i_1}, lexicographic in (i_1, …, i_q)."""
    if q < 1:
        raise ValueError(f"q must be positive, got {q}")
    if q == 1:
        return family
    check_budget(float(family.count) ** q, "product-family members")
    stack = family.stack
    parts = [list(iter_levels(stack, first, q))[-1][1] for first in range(family.count)]
    return MatrixFamily(members=list(np.concatenate(parts)))


def refined_bound(
    family: MatrixFamily,
    q: int,
    weight_source: Callable[[MatrixFamily], BoundReport],
) -> BoundReport:
    """(best bound on 𝓜^q)^{1/q}; *weight_source* maps a family to a lower-bound report."""
    inner = weight_source(product_family(family, q))
    if q == 1:
        return inner
    return BoundReport(
        name=f"{inner.name}_q{q}",
        kind=BoundKind.LOWER,
        value=inner.value ** (1.0 / q),
        validity=inner.validity,
        witness=inner.witness,
        tolerance=inner.tolerance,
        notes=f"{inner.notes}; length-{q} product family, q-th root",
        meta={**inner.meta, "q": q, "product_value": inner.value},
    )

# ── 5. Complex weights ────────────────────────────────────────────────────

def complex_embed(w) -> np.ndarray:
    """T_W = [[Re W, −Im W], [Im W, Re W]] from a complex matrix or a (real, imag) pair."""
    if isinstance(w, tuple) and len(w) == 2:
        re, im = as_matrix(w[0], name="real part"), as_matrix(w[1], name="imaginary part")
    else:
        arr = as_matrix(w, name="weight", allow_complex=True)
        re, im = arr.real, arr.imag
    if re.shape != im.shape:
        raise ValueError(f"real part {re.shape} and imaginary part {im.shape} differ")
    return block_matrix([[re, -im], [im, re]])
