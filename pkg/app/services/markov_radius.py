"""Markov-switched p-radius: upper sequence, Ω-lift, block lower bounds, verdicts.

1. markov_h_k:      chain-probability-weighted product norms (upper bounds).
2. omega_lift:      i.i.d. family B_ij with the same p-radius.
3. markov_lambda:   ρ of the block matrix with (j, i) block q_ij W_ij ⊗ A_i.
4. Search:          scalar grid and Cayley-parametrized matrix weights.
5. Verdict:         stable / unstable / undetermined for i.i.d. or Markov targets.
"""

from __future__ import annotations
import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from app.config import settings
from app.exceptions import PRadiusError
from app.models.schemas import (
    BoundKind,
    BoundReport,
    Certificate,
    CayleyPoint,
    Effort,
    MarkovModel,
    MarkovWeightSet,
    MatrixFamily,
    OptimizerConfig,
    Validity,
    Verdict,
    VerdictStatus,
    WeightSet,
)
from app.services.linalg_core import (
    block_matrix,
    check_dimension,
    kron,
    operator_norms,
    spectral_radii,
    spectral_radius,
)
from app.services.lower_bounds import (
    certify_weights,
    normalize_weights,
    refined_bound,
    scalar_weight_bound,
    search_unit_box,
    weights_bound,
    zhou_from_bracket,
)
from app.services.radius_core import (
    exact_p_radius,
    h_sequence,
    lift_p_to_1,
    log_moment_sums,
    upper_reports,
)
from app.services.weight_optimizer import (
    best_restart,
    materialize,
    optimize,
    restart_meta,
    run_restarts,
    scalar_start,
)

logger = logging.getLogger(__name__)

Target = Union[MatrixFamily, MarkovModel]


# ── 1. Upper bounds ───────────────────────────────────────────────────────

def _log_transition(model: MarkovModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(model.transition)


def markov_h_sequence(model: MarkovModel, p: int, k_max: int) -> List[float]:
    """[h_1(𝓜,Q), …, h_{k_max}(𝓜,Q)]; zero-probability chains are pruned."""
    if p < 1 or k_max < 1:
        raise ValueError("p and k must be positive integers")
    sums = log_moment_sums(model.family.stack, p, k_max, _log_transition(model))
    return [float(np.exp(sums[k - 1] / (p * k))) for k in range(1, k_max + 1)]


def markov_h_k(model: MarkovModel, p: int, k: int) -> float:
    """(Σ q_{i1 i2}⋯q_{i_{k−1} i_k} ‖A_{i_k}⋯A_{i_1}‖^p)^{1/(pk)}."""
    return markov_h_sequence(model, p, k)[-1]

# ── 2. Ω-lift ─────────────────────────────────────────────────────────────

def omega_lift(model: MarkovModel, p: int) -> MatrixFamily:
    """B_ij = N^{2/p} q_ij^{1/p} A_i ⊗ (e_j e_iᵀ), lexicographic in (i, j)."""
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    count = model.count
    check_dimension(model.n * count, "Ω-lift")
    members = []
    for i in range(count):
        for j in range(count):
            unit = np.zeros((count, count))
            unit[j, i] = 1.0
            coeff = count ** (2.0 / p) * model.transition[i, j] ** (1.0 / p)
            members.append(coeff * kron(model.family.members[i], unit))
    return MatrixFamily(members=members)

# ── 3. Block lower bound ──────────────────────────────────────────────────

def _grid(weights) -> np.ndarray:
    if isinstance(weights, MarkovWeightSet):
        return weights.stack
    return np.asarray(weights, dtype=float)


def markov_block_matrix(model: MarkovModel, weights: Union[MarkovWeightSet, np.ndarray]) -> np.ndarray:
    """Block row j, block column i holds q_ij W_ij ⊗ A_i."""
    grid = _grid(weights)
    count = model.count
    if grid.shape[:2] != (count, count):
        raise ValueError(f"weight grid is {grid.shape[:2]}, expected {(count, count)}")
    check_dimension(grid.shape[-1] * model.n * count, "Markov block matrix")
    a, q = model.family.members, model.transition
    blocks = [[q[i, j] * kron(grid[i, j], a[i]) for i in range(count)] for j in range(count)]
    return block_matrix(blocks)


def batched_block_radii(model: MarkovModel, grids: np.ndarray) -> np.ndarray:
    """ρ of the block matrix for a batch of grids shaped ``(B, N, N, m, m)``."""
    batch, count, _, m, _ = grids.shape
    n = model.n
    dim = count * m * n
    check_dimension(dim, "Markov block matrix")
    chunk = max(1, 4_000_000 // (dim * dim))
    out = np.empty(batch)
    for start in range(0, batch, chunk):
        part = grids[start:start + chunk]
        big = np.einsum("bijad,ij,ice->bjacide", part, model.transition, model.family.stack)
        out[start:start + chunk] = spectral_radii(big.reshape(part.shape[0], dim, dim))
    return out


def markov_lambda(model: MarkovModel, weights: Union[MarkovWeightSet, np.ndarray]) -> float:
    """ρ of the block matrix; a lower bound on ρ_1(𝓜, Q) for certified weights."""
    return spectral_radius(markov_block_matrix(model, weights))


def certify_markov_weights(weights: MarkovWeightSet, depth: int | None = None) -> MarkovWeightSet:
    """Norm check, then a JSR bracket over all W_ij."""
    flat = WeightSet(weights=list(weights.stack.reshape(-1, weights.m, weights.m)))
    checked = certify_weights(flat, depth)
    return MarkovWeightSet(weights=weights.weights, certificate=checked.certificate)


def normalize_markov_weights(weights: MarkovWeightSet) -> MarkovWeightSet:
    top = float(np.max(operator_norms(weights.stack.reshape(-1, weights.m, weights.m))))
    scale = max(top, 1.0)
    return MarkovWeightSet(
        weights=[[w / scale for w in row] for row in weights.weights],
        certificate=Certificate.NORM_BOUNDED,
    )


def markov_weights_bound(model: MarkovModel, weights: MarkovWeightSet, name: str = "markov_lambda") -> BoundReport:
    return BoundReport(
        name=name,
        kind=BoundKind.LOWER,
        value=markov_lambda(model, weights),
        validity=Validity.CERTIFIED if weights.certificate.is_valid else Validity.HEURISTIC,
        witness=weights,
        notes=f"block weights m={weights.m}, certificate={weights.certificate.value}",
    )

# ── 4. Search ─────────────────────────────────────────────────────────────

def markov_scalar_bound(model: MarkovModel, grid_resolution: int | None = None) -> BoundReport:
    """Best block-matrix radius over scalar weights w_ij ∈ [−1, 1]."""
    resolution = settings.GRID_RESOLUTION if grid_resolution is None else grid_resolution
    count = model.count
    dims = count * count

    def objective(ws: np.ndarray) -> np.ndarray:
        return batched_block_radii(model, ws.reshape(-1, count, count, 1, 1))

    _, w = search_unit_box(objective, dims, resolution,
                           exhaustive=dims <= settings.SCALAR_GRID_MAX_N)
    witness = MarkovWeightSet(
        weights=[[[[w[i * count + j]]] for j in range(count)] for i in range(count)],
        certificate=Certificate.NORM_BOUNDED,
    )
    return BoundReport(
        name="markov_scalar",
        kind=BoundKind.LOWER,
        value=markov_lambda(model, witness),
        witness=witness,
        notes=f"scalar weights w_ij {np.round(w, 6).tolist()}",
        meta={"weights": w.tolist(), "grid_resolution": resolution},
    )


def markov_optimize(model: MarkovModel, m: int, config: Optional[OptimizerConfig] = None) -> BoundReport:
    """Best block-matrix radius over N² independent diagonal-times-orthogonal weights."""
    config = config or OptimizerConfig()
    count = model.count
    check_dimension(m * model.n * count, "Markov block matrix")
    if m == 1:
        report = markov_scalar_bound(model)
        return report.model_copy(update={"name": "markov_optimized_m1",
                                         "notes": report.notes + "; m=1 uses the scalar grid"})
    seeded = []
    if config.seed_bounds:
        scalar = markov_scalar_bound(model)
        seeded.append(scalar_start(scalar.meta["weights"], m))

    def evaluate(ws: np.ndarray) -> np.ndarray:
        return batched_block_radii(model, ws.reshape(ws.shape[0], count, count, m, m))

    results = run_restarts(evaluate, count * count, m, config, seeded)
    best = best_restart(results)
    flat = materialize(
        CayleyPoint(m=m, skew_params=best.skew, sign_diag=best.signs, scale_diag=best.scales)
    )
    grid = [[flat.weights[i * count + j] for j in range(count)] for i in range(count)]
    witness = MarkovWeightSet(weights=grid, certificate=Certificate.NORM_BOUNDED)
    return BoundReport(
        name=f"markov_optimized_m{m}",
        kind=BoundKind.LOWER,
        value=markov_lambda(model, witness),
        witness=witness,
        notes=(f"local optimum from restart {best.index} ({best.label}); "
               f"{config.restarts} restarts, seed {config.rng_seed}"),
        meta=restart_meta(results, best),
    )

# ── 5. Verdict ────────────────────────────────────────────────────────────

def _affordable_depth(count: int, wanted: int) -> int:
    if count <= 1:
        return wanted
    return max(1, min(wanted, int(math.log(settings.PRODUCT_BUDGET) / math.log(count) + 1e-9)))


def _as_rho_p(report: BoundReport, exponent: float, p: int, how: str) -> BoundReport:
    if exponent == 1.0 and p == 1:
        return report
    return report.model_copy(update={
        "name": f"{report.name}_p{p}",
        "value": report.value ** exponent,
        "notes": f"{report.notes}; {how}",
    })


def exact_report(target: Target, p: int) -> Optional[BoundReport]:
    if isinstance(target, MarkovModel):
        lifted = omega_lift(target, p)
        report = exact_p_radius(lifted, p)
        if report is not None:
            report = report.model_copy(update={"notes": report.notes + " via the Ω-lift"})
        return report
    return exact_p_radius(target, p)


def upper_sequence(target: Target, p: int, k_max: int) -> List[float]:
    if isinstance(target, MarkovModel):
        return markov_h_sequence(target, p, k_max)
    return h_sequence(target, p, k_max)


def _markov_hint(target: MarkovModel, hint: MarkovWeightSet, idx: int, depth: int) -> BoundReport:
    checked = certify_markov_weights(hint, depth)
    if not checked.certificate.is_valid:
        checked = normalize_markov_weights(hint)
    return markov_weights_bound(target, checked, f"hint_{idx}")


def _markov_zhou(target: MarkovModel, depth: int) -> BoundReport:
    # ℓ_Z on the p=1 Ω-lift bounds ρ_1 of the lift, which equals ρ_1(𝓜, Q).
    lifted = omega_lift(target, 1)
    report = zhou_from_bracket(lifted, _affordable_depth(lifted.count, depth))
    return report.model_copy(update={"name": "markov_zhou"})


def _iid_hint(target: MatrixFamily, hint: WeightSet, idx: int, depth: int) -> BoundReport:
    checked = certify_weights(hint, depth)
    if not checked.certificate.is_valid:
        checked = normalize_weights(hint)
    return weights_bound(target, checked, f"hint_{idx}")


LOWER_KINDS = ("hints", "scalar", "zhou", "optimize")


def lower_bound_jobs(
    target: Target,
    p: int,
    effort: Effort,
    hints: Sequence = (),
    kinds: Sequence[str] = LOWER_KINDS,
    q: int = 1,
):
    """Yield ``(name, thunk)`` pairs producing lower bounds on ρ_p, cheapest first.

    Thunks run lazily so a caller can stop at the first decisive bound or
    report a failing one without losing the rest. *q* > 1 evaluates the
    i.i.d. scalar, Zhou and optimizer bounds on the length-q product family.
    """
    # ρ_p ≥ ρ_1 for p ≥ 1, so any bound on ρ_1 also bounds ρ_p.
    monotone = "rho_p >= rho_1"
    depth = effort.jsr_depth
    if isinstance(target, MarkovModel):
        if q > 1:
            logger.warning("q=%d ignored: product families apply to i.i.d. switching only", q)
        if "hints" in kinds:
            for idx, hint in enumerate(hints):
                yield f"hint_{idx}", lambda h=hint, i=idx: _as_rho_p(
                    _markov_hint(target, h, i, depth), 1.0, p, monotone)
        if "scalar" in kinds:
            yield "markov_scalar", lambda: _as_rho_p(
                markov_scalar_bound(target, effort.grid_resolution), 1.0, p, monotone)
        if "zhou" in kinds:
            yield "markov_zhou", lambda: _as_rho_p(_markov_zhou(target, depth), 1.0, p, monotone)
        if "optimize" in kinds and effort.optimize:
            m = effort.m or target.n
            yield f"markov_optimized_m{m}", lambda: _as_rho_p(
                markov_optimize(target, m, effort.optimizer), 1.0, p, monotone)
        return

    family, exponent, how = target, 1.0, monotone
    if p > 1:
        try:
            family = lift_p_to_1(target, p)
            exponent, how = 1.0 / p, "bound on the p=1 lift, p-th root"
        except PRadiusError as exc:
            logger.info("lift skipped (%s); using rho_p >= rho_1", exc)

    def refined(source):
        return lambda: _as_rho_p(refined_bound(family, q, source), exponent, p, how)

    if "hints" in kinds:
        for idx, hint in enumerate(hints):
            yield f"hint_{idx}", lambda h=hint, i=idx: _as_rho_p(
                _iid_hint(target, h, i, depth), 1.0, p, monotone)
    if "scalar" in kinds:
        yield "scalar", refined(lambda fam: scalar_weight_bound(fam, effort.grid_resolution))
    if "zhou" in kinds:
        yield "zhou", refined(lambda fam: zhou_from_bracket(fam, _affordable_depth(fam.count, depth)))
    if "optimize" in kinds and effort.optimize:
        m = effort.m or family.n
        yield f"optimized_m{m}", refined(lambda fam: optimize(fam, m, effort.optimizer))


def stability_verdict(
    target: Target,
    p: int,
    effort: Optional[Effort] = None,
    hints: Sequence[Union[WeightSet, MarkovWeightSet]] = (),
) -> Verdict:
    """p-th mean stability: stable if an upper bound is < 1, unstable if a
    certified lower bound is > 1, otherwise undetermined.

    Work stops at the first decisive bound.
    """
    effort = effort or Effort()
    tol = settings.STABILITY_TOL
    reports: list[BoundReport] = []

    def decided(status: VerdictStatus, witness: BoundReport) -> Verdict:
        lowers = [r.value for r in reports if r.kind is not BoundKind.UPPER and r.certified]
        uppers = [r.value for r in reports if r.kind is not BoundKind.LOWER]
        return Verdict(status=status, p=p, witness=witness,
                       best_lower=max(lowers, default=None), best_upper=min(uppers, default=None),
                       reports=reports)

    try:
        exact = exact_report(target, p)
    except PRadiusError as exc:
        logger.info("exact formula skipped: %s", exc)
        exact = None
    if exact is not None:
        reports.append(exact)
        if exact.value < 1.0 - tol:
            return decided(VerdictStatus.STABLE, exact)
        if exact.value > 1.0 + tol:
            return decided(VerdictStatus.UNSTABLE, exact)

    k_max = _affordable_depth(target.count, effort.k_max)
    if k_max < effort.k_max:
        logger.info("upper sequence truncated to k=%d by the product budget", k_max)
    label = "markov_h" if isinstance(target, MarkovModel) else "h"
    uppers = upper_reports(upper_sequence(target, p, k_max), p, label)
    reports.extend(uppers)
    best_upper = min(uppers, key=lambda r: r.value)
    if best_upper.value < 1.0 - tol:
        return decided(VerdictStatus.STABLE, best_upper)

    for _, make in lower_bound_jobs(target, p, effort, hints):
        try:
            report = make()
        except ValueError as exc:
            logger.info("lower bound skipped: %s", exc)
            continue
        reports.append(report)
        if report.certified and report.value > 1.0 + tol:
            return decided(VerdictStatus.UNSTABLE, report)

    verdict = decided(VerdictStatus.UNDETERMINED, None)
    logger.info("undetermined: best lower %s, best upper %s", verdict.best_lower, verdict.best_upper)
    return verdict
