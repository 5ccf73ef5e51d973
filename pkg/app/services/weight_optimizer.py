"""Local maximization of λ_W over diagonal-times-orthogonal weights.

Every weight is W = diag(scale) · D (I − S)(I + S)⁻¹ with S skew-symmetric,
D a ±1 diagonal and |scale| ≤ 1, so ‖W‖ ≤ 1 holds at every iterate and each
value found is a certified lower bound. Continuous parameters (skew entries,
scales) move by sampled-gradient ascent; signs and unit scales by coordinate
toggling. Restarts are independent and seeded with ``rng_seed ^ restart``.
"""

from __future__ import annotations
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import polar

from app.exceptions import BudgetExceededError
from app.models.schemas import (
    BoundKind,
    BoundReport,
    CayleyPoint,
    Certificate,
    MatrixFamily,
    OptimizerConfig,
    Validity,
    WeightSet,
)
from app.services.linalg_core import check_dimension
from app.services.lower_bounds import (
    batched_lambda,
    lambda_w,
    pad_weights,
    scalar_weight_bound,
    zhou_from_bracket,
)
from app.utils.helpers import ordered_map

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


# ── Cayley map ────────────────────────────────────────────────────────────

def skew_from_params(params: np.ndarray, m: int) -> np.ndarray:
    """(..., m(m−1)/2) strict-upper-triangle entries → (..., m, m) skew matrices."""
    params = np.asarray(params, dtype=float)
    rows, cols = np.triu_indices(m, k=1)
    skew = np.zeros(params.shape[:-1] + (m, m))
    skew[..., rows, cols] = params
    skew[..., cols, rows] = -params
    return skew


def cayley_orthogonal(skew: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """D (I − S)(I + S)⁻¹ for stacks of skew S and sign vectors D."""
    m = skew.shape[-1]
    eye = np.eye(m)
    # (I − S) and (I + S)⁻¹ commute, so solve (I + S) X = I − S.
    core = np.linalg.solve(eye + skew, eye - skew)
    return signs[..., :, None] * core


def materialize_stack(skew_params: np.ndarray, signs: np.ndarray, scales: np.ndarray, m: int) -> np.ndarray:
    """Weights diag(scale) · D · Cayley(S) for arbitrary leading batch shape."""
    return scales[..., :, None] * cayley_orthogonal(skew_from_params(skew_params, m), signs)


def materialize(point: CayleyPoint) -> WeightSet:
    """Concrete weights of a Cayley point (always norm-bounded)."""
    stack = materialize_stack(point.skew_params, point.sign_diag, point.scale_diag, point.m)
    return WeightSet(weights=list(stack), certificate=Certificate.NORM_BOUNDED)


def cayley_parameters(orthogonal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse map: (skew params, signs) with D · Cayley(S) = *orthogonal*.

    D is chosen to keep I + D·L best conditioned.
    """
    m = orthogonal.shape[0]
    eye = np.eye(m)
    if m <= 10:
        patterns = (np.array(s, dtype=float) for s in itertools.product((1.0, -1.0), repeat=m))
    else:
        patterns = iter([np.where(np.diag(orthogonal) >= 0.0, 1.0, -1.0)])
    best, best_sigma = None, -1.0
    for signs in patterns:
        sigma = np.linalg.svd(eye + signs[:, None] * orthogonal, compute_uv=False)[-1]
        if sigma > best_sigma:
            best, best_sigma = signs, sigma
    core = best[:, None] * orthogonal
    skew = np.linalg.solve(eye + core, eye - core)
    skew = 0.5 * (skew - skew.T)
    return skew[np.triu_indices(m, k=1)], best


def project_to_class(weight: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest diagonal-times-orthogonal form via the polar factor.

    W = U P; the orthogonal U becomes the Cayley part and the clipped
    diagonal of W Uᵀ the scales.
    """
    unitary, _ = polar(weight)
    params, signs = cayley_parameters(unitary)
    scales = np.clip(np.diag(weight @ unitary.T), -1.0, 1.0)
    return params, signs, scales

# ── Search engine ─────────────────────────────────────────────────────────

@dataclass
class _Start:
    label: str
    skew: np.ndarray      # (K, r)
    signs: np.ndarray     # (K, m)
    scales: np.ndarray    # (K, m)


@dataclass
class RestartResult:
    index: int
    label: str
    value: float
    skew: np.ndarray
    signs: np.ndarray
    scales: np.ndarray
    trace: List[float] = field(default_factory=list)


class _Layout:
    """Flat parameter vector x = [skew params (K·r) | scales (K·m)]."""

    def __init__(self, count: int, m: int, evaluate: Evaluator):
        self.count = count
        self.m = m
        self.r = m * (m - 1) // 2
        self.dim = count * (self.r + m)
        self._evaluate = evaluate

    def pack(self, skew: np.ndarray, scales: np.ndarray) -> np.ndarray:
        return np.concatenate([skew.reshape(-1), scales.reshape(-1)])

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lead = x.shape[:-1]
        split = self.count * self.r
        skew = x[..., :split].reshape(*lead, self.count, self.r)
        scales = x[..., split:].reshape(*lead, self.count, self.m)
        return skew, scales

    def project(self, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        split = self.count * self.r
        out[..., split:] = np.clip(out[..., split:], -1.0, 1.0)
        return out

    def evaluate(self, xs: np.ndarray, signs: np.ndarray) -> np.ndarray:
        """Objective for a batch of parameter vectors (signs broadcast or per row)."""
        skew, scales = self.unpack(xs)
        signs = np.broadcast_to(signs, scales.shape)
        weights = materialize_stack(skew, signs, scales, self.m)
        return self._evaluate(weights)


def _ascend(layout: _Layout, x: np.ndarray, signs: np.ndarray, value: float,
            config: OptimizerConfig, rng: np.random.Generator, trace: List[float]):
    """Sampled-gradient ascent with backtracking; returns (x, value)."""
    d = layout.dim
    samples = config.samples_per_iter or 2 * d
    step = config.step_init
    shrinks = config.step_shrink ** np.arange(4)
    eye = np.eye(d)
    for _ in range(config.max_iters):
        points = x + config.sample_radius * rng.uniform(-1.0, 1.0, (samples, d))
        points[0] = x
        h = config.fd_step * np.maximum(1.0, np.abs(points))
        plus = points[:, None, :] + h[:, :, None] * eye
        minus = points[:, None, :] - h[:, :, None] * eye
        vals = layout.evaluate(np.concatenate([plus, minus]).reshape(-1, d), signs)
        vals = vals.reshape(2, samples, d)
        grad = ((vals[0] - vals[1]) / (2.0 * h)).mean(axis=0)
        gnorm = float(np.linalg.norm(grad))
        if not math.isfinite(gnorm) or gnorm == 0.0:
            break
        steps = step * shrinks
        candidates = layout.project(x + steps[:, None] * (grad / gnorm))
        cvals = layout.evaluate(candidates, signs)
        best = int(np.argmax(cvals))
        if cvals[best] > value:
            gain = float(cvals[best]) - value
            x, value = candidates[best], float(cvals[best])
            step = min(steps[best] / config.step_shrink, 1.0) if best == 0 else steps[best]
            trace.append(value)
            if gain < config.stall_tol:
                break
        else:
            step = steps[-1] * config.step_shrink
            trace.append(value)
            if step < config.min_step:
                break
    return x, value


def _toggle(layout: _Layout, x: np.ndarray, signs: np.ndarray, value: float, tol: float):
    """One best-improvement pass over sign flips and scale snaps to ±1."""
    cand_x, cand_s = [], []
    split = layout.count * layout.r
    for k in range(layout.count):
        for i in range(layout.m):
            flipped = signs.copy()
            flipped[k, i] *= -1.0
            cand_x.append(x)
            cand_s.append(flipped)
            for target in (1.0, -1.0):
                snapped = x.copy()
                snapped[split + k * layout.m + i] = target
                cand_x.append(snapped)
                cand_s.append(signs)
    vals = layout.evaluate(np.array(cand_x), np.array(cand_s))
    best = int(np.argmax(vals))
    if vals[best] > value + tol:
        return cand_x[best], cand_s[best], float(vals[best]), True
    return x, signs, value, False


def _run_restart(layout: _Layout, start: _Start, index: int, config: OptimizerConfig) -> RestartResult:
    rng = np.random.default_rng(config.rng_seed ^ index)
    x = layout.pack(start.skew, start.scales)
    signs = start.signs.copy()
    value = float(layout.evaluate(x[None], signs)[0])
    trace = [value]
    x, value = _ascend(layout, x, signs, value, config, rng, trace)
    for _ in range(config.discrete_rounds):
        x, signs, value, moved = _toggle(layout, x, signs, value, config.stall_tol)
        if not moved:
            break
        trace.append(value)
        x, value = _ascend(layout, x, signs, value, config, rng, trace)
    skew, scales = layout.unpack(x)
    logger.debug("restart %d (%s): %.9f after %d steps", index, start.label, value, len(trace))
    return RestartResult(index, start.label, value, skew, signs, scales, trace)


def random_start(count: int, m: int, rng: np.random.Generator) -> _Start:
    r = m * (m - 1) // 2
    return _Start(
        label="random",
        skew=rng.uniform(-2.0, 2.0, (count, r)),
        signs=rng.choice((-1.0, 1.0), size=(count, m)),
        scales=rng.uniform(-1.0, 1.0, (count, m)),
    )


def identity_start(count: int, m: int) -> _Start:
    r = m * (m - 1) // 2
    return _Start("identity", np.zeros((count, r)), np.ones((count, m)), np.ones((count, m)))


def scalar_start(values: Sequence[float], m: int) -> _Start:
    """W_i = w_i · I_m."""
    values = np.asarray(values, dtype=float)
    count = values.size
    signs = np.where(values < 0.0, -1.0, 1.0)
    return _Start(
        "scalar",
        np.zeros((count, m * (m - 1) // 2)),
        np.repeat(signs[:, None], m, axis=1),
        np.repeat(np.abs(values)[:, None], m, axis=1),
    )


def matrix_start(weights: Sequence[np.ndarray], label: str) -> _Start:
    parts = [project_to_class(np.asarray(w)) for w in weights]
    return _Start(
        label,
        np.array([p[0] for p in parts]),
        np.array([p[1] for p in parts]),
        np.array([p[2] for p in parts]),
    )


def run_restarts(
    evaluate: Evaluator,
    count: int,
    m: int,
    config: OptimizerConfig,
    seeded: Sequence[_Start] = (),
) -> List[RestartResult]:
    """Run ``config.restarts`` ascents: identity, then *seeded* starts, then random ones."""
    layout = _Layout(count, m, evaluate)
    starts = [identity_start(count, m), *seeded][: config.restarts]
    for index in range(len(starts), config.restarts):
        starts.append(random_start(count, m, np.random.default_rng(config.rng_seed ^ index)))
    return ordered_map(lambda pair: _run_restart(layout, pair[1], pair[0], config), list(enumerate(starts)))


def best_restart(results: Sequence[RestartResult]) -> RestartResult:
    """Max value, ties to the lowest restart index."""
    best = results[0]
    for res in results[1:]:
        if res.value > best.value:
            best = res
    return best


def restart_meta(results: Sequence[RestartResult], best: RestartResult) -> dict:
    return {
        "best_restart": best.index,
        "best_start": best.label,
        "restart_values": [r.value for r in results],
        "traces": [r.trace for r in results],
    }

# ── i.i.d. optimizer ──────────────────────────────────────────────────────

def optimize(family: MatrixFamily, m: int, config: Optional[OptimizerConfig] = None) -> BoundReport:
    """Best λ_W over m×m diagonal-times-orthogonal weights found by restarts.

    The value is a certified lower bound on ρ_1; only its optimality is
    heuristic. m = 1 reduces to the scalar-weight search.
    """
    config = config or OptimizerConfig()
    check_dimension(m * family.n, "weighted Kronecker average")
    if m == 1:
        report = scalar_weight_bound(family)
        return report.model_copy(update={"name": "optimized_m1",
                                         "notes": report.notes + "; m=1 uses the scalar grid"})

    seeded: list[_Start] = []
    direct: list[tuple[str, WeightSet]] = []
    if config.seed_bounds:
        scalar = scalar_weight_bound(family)
        seeded.append(scalar_start(scalar.meta["weights"], m))
        direct.append(("scalar", pad_weights(scalar.witness, m)))
        if m >= family.n:
            try:
                zhou = zhou_from_bracket(family)
            except BudgetExceededError as exc:
                logger.info("zhou seed skipped: %s", exc)
            else:
                seed = pad_weights(zhou.witness, m)
                seeded.append(matrix_start(seed.weights, "zhou"))
                direct.append(("zhou", seed))

    results = run_restarts(
        lambda ws: batched_lambda(family, ws), family.count, m, config, seeded,
    )
    best = best_restart(results)
    witness = materialize(CayleyPoint(m=m, skew_params=best.skew, sign_diag=best.signs,
                                      scale_diag=best.scales))
    value = lambda_w(family, witness)
    source = f"restart {best.index} ({best.label})"
    for label, weights in direct:
        candidate = lambda_w(family, weights)
        if candidate > value:
            value, witness, source = candidate, weights, f"{label} seed"
    return BoundReport(
        name=f"optimized_m{m}",
        kind=BoundKind.LOWER,
        value=value,
        validity=Validity.CERTIFIED,
        witness=witness,
        notes=f"local optimum from {source}; {config.restarts} restarts, seed {config.rng_seed}",
        meta=restart_meta(results, best),
    )
