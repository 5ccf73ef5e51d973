"""Pydantic domain types shared by the services and the CLI.

Naming follows the bounds vocabulary:
  - MatrixFamily  → the switched system's matrices {A_1, …, A_N}
  - WeightSet     → Kronecker weights {W_1, …, W_N} with a validity certificate
  - BoundReport   → one named upper / lower / exact value with provenance
"""

from __future__ import annotations
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.services.linalg_core import as_matrix, operator_norms

FiniteFloat = Annotated[float, Field(strict=True, allow_inf_nan=False)]

_ARRAY_MODEL = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def _square_stack(items, label: str) -> tuple[np.ndarray, ...]:
    mats = tuple(as_matrix(m, name=f"{label}[{i}]") for i, m in enumerate(items))
    if not mats:
        raise ValueError(f"{label}: at least one matrix is required")
    dim = mats[0].shape
    for i, mat in enumerate(mats):
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"{label}[{i}]: expected a square matrix, got shape {mat.shape}")
        if mat.shape != dim:
            raise ValueError(f"{label}[{i}]: shape {mat.shape} differs from {label}[0] shape {dim}")
    return mats


# ── Families ──────────────────────────────────────────────────────────────

class MatrixFamily(BaseModel):
    """Indexed family of N real n×n matrices."""
    model_config = _ARRAY_MODEL

    members: tuple[np.ndarray, ...] = Field(..., description="A_1 … A_N, all n×n")

    @field_validator("members", mode="before")
    @classmethod
    def _validate_members(cls, value):
        return _square_stack(value, "members")

    @classmethod
    def of(cls, *matrices) -> "MatrixFamily":
        return cls(members=matrices)

    @property
    def n(self) -> int:
        return self.members[0].shape[0]

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def stack(self) -> np.ndarray:
        """Members as an ``(N, n, n)`` array."""
        return np.stack(self.members)

    def scaled(self, factor: float) -> "MatrixFamily":
        return MatrixFamily(members=[factor * a for a in self.members])

    def is_nonnegative(self) -> bool:
        return all(bool(np.all(a >= 0.0)) for a in self.members)


class MarkovModel(BaseModel):
    """Matrix family switched by a Markov chain with row-stochastic Q."""
    model_config = _ARRAY_MODEL

    family: MatrixFamily
    transition: np.ndarray = Field(..., description="N×N row-stochastic matrix Q")

    @field_validator("transition", mode="before")
    @classmethod
    def _validate_transition(cls, value):
        q = as_matrix(value, name="transition")
        if q.shape[0] != q.shape[1]:
            raise ValueError(f"transition: expected a square matrix, got shape {q.shape}")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise ValueError("transition: entries must lie in [0, 1]")
        sums = q.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > settings.STOCHASTIC_TOL)
        if bad.size:
            row = int(bad[0])
            raise ValueError(f"transition[{row}]: row sums to {sums[row]!r}, expected 1")
        return q

    @model_validator(mode="after")
    def _check_sizes(self) -> "MarkovModel":
        if self.transition.shape[0] != self.family.count:
            raise ValueError(
                f"transition is {self.transition.shape[0]}×{self.transition.shape[0]} "
                f"but the family has {self.family.count} matrices"
            )
        return self

    @property
    def count(self) -> int:
        return self.family.count

    @property
    def n(self) -> int:
        return self.family.n


# ── Weights ───────────────────────────────────────────────────────────────

class Certificate(str, Enum):
    NORM_BOUNDED = "norm_bounded"
    BRACKET_CHECKED = "bracket_checked"
    UNCHECKED = "unchecked"

    @property
    def is_valid(self) -> bool:
        return self is not Certificate.UNCHECKED


class WeightSet(BaseModel):
    """Weights {W_1, …, W_N} paired index-wise with a MatrixFamily."""
    model_config = _ARRAY_MODEL

    weights: tuple[np.ndarray, ...]
    certificate: Certificate = Certificate.UNCHECKED

    @field_validator("weights", mode="before")
    @classmethod
    def _validate_weights(cls, value):
        return _square_stack(value, "weights")

    @model_validator(mode="after")
    def _check_certificate(self) -> "WeightSet":
        if self.certificate is Certificate.NORM_BOUNDED:
            worst = float(np.max(operator_norms(self.stack)))
            if worst > 1.0 + settings.NORM_TOL:
                raise ValueError(f"norm_bounded certificate violated: max ‖W_i‖ = {worst!r}")
        return self

    @classmethod
    def scalars(cls, values, certificate: Certificate | None = None) -> "WeightSet":
        """1×1 weights from a scalar vector; |w_i| ≤ 1 makes them norm-bounded."""
        values = [float(v) for v in values]
        if certificate is None:
            ok = all(abs(v) <= 1.0 + settings.NORM_TOL for v in values)
            certificate = Certificate.NORM_BOUNDED if ok else Certificate.UNCHECKED
        return cls(weights=[[[v]] for v in values], certificate=certificate)

    @property
    def m(self) -> int:
        return self.weights[0].shape[0]

    @property
    def count(self) -> int:
        return len(self.weights)

    @property
    def stack(self) -> np.ndarray:
        return np.stack(self.weights)

    def to_lists(self) -> list:
        return [w.tolist() for w in self.weights]


class MarkovWeightSet(BaseModel):
    """N×N grid of m×m weights W_ij for the Markov block matrix."""
    model_config = _ARRAY_MODEL

    weights: tuple[tuple[np.ndarray, ...], ...]
    certificate: Certificate = Certificate.UNCHECKED

    @field_validator("weights", mode="before")
    @classmethod
    def _validate_grid(cls, value):
        rows = [list(row) for row in value]
        if not rows or any(len(row) != len(rows) for row in rows):
            raise ValueError("weights: expected a square N×N grid of matrices")
        flat = _square_stack([w for row in rows for w in row], "weights")
        size = len(rows)
        return tuple(tuple(flat[i * size:(i + 1) * size]) for i in range(size))

    @model_validator(mode="after")
    def _check_certificate(self) -> "MarkovWeightSet":
        if self.certificate is Certificate.NORM_BOUNDED:
            worst = float(np.max(operator_norms(self.stack.reshape(-1, self.m, self.m))))
            if worst > 1.0 + settings.NORM_TOL:
                raise ValueError(f"norm_bounded certificate violated: max ‖W_ij‖ = {worst!r}")
        return self

    @property
    def m(self) -> int:
        return self.weights[0][0].shape[0]

    @property
    def count(self) -> int:
        return len(self.weights)

    @property
    def stack(self) -> np.ndarray:
        """Weights as an ``(N, N, m, m)`` array indexed ``[i, j]``."""
        return np.stack([np.stack(row) for row in self.weights])

    def to_lists(self) -> list:
        return [[w.tolist() for w in row] for row in self.weights]


# ── Reports ───────────────────────────────────────────────────────────────

class BoundKind(str, Enum):
    UPPER = "upper"
    LOWER = "lower"
    EXACT = "exact"


class Validity(str, Enum):
    CERTIFIED = "certified"
    HEURISTIC = "heuristic"


class BoundReport(BaseModel):
    """One bound value with the witness that makes it trustworthy."""
    model_config = _ARRAY_MODEL

    name: str
    kind: BoundKind
    value: float = Field(..., ge=0.0)
    validity: Validity = Validity.CERTIFIED
    witness: Optional[Union[WeightSet, MarkovWeightSet]] = None
    tolerance: float = Field(default_factory=lambda: settings.EIG_TOL)
    notes: str = ""
    meta: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _certified_lower_has_witness(self) -> "BoundReport":
        if self.kind is BoundKind.LOWER and self.validity is Validity.CERTIFIED:
            if self.witness is None or not self.witness.certificate.is_valid:
                raise ValueError(f"{self.name}: certified lower bound needs a certified witness")
        return self

    @property
    def certified(self) -> bool:
        return self.validity is Validity.CERTIFIED

    def to_row(self) -> "ReportRow":
        witness = None
        if self.witness is not None:
            witness = {"certificate": self.witness.certificate.value,
                       "weights": self.witness.to_lists()}
        return ReportRow(
            name=self.name,
            kind=self.kind.value,
            value=self.value,
            certified=self.certified,
            witness=witness,
            tolerance=self.tolerance,
            notes=self.notes,
        )


class ReportRow(BaseModel):
    """Machine-readable output row (stable field names)."""
    name: str
    kind: str
    value: Optional[float] = Field(None, description="None when the bound could not be computed")
    certified: bool
    witness: Optional[Dict[str, Any]] = None
    tolerance: Optional[float] = None
    notes: str = ""


class RadiusBracket(BaseModel):
    """Running bracket lower ≤ ρ_∞ ≤ upper from products up to ``depth``."""
    model_config = ConfigDict(frozen=True)

    lower: float = Field(..., ge=0.0)
    upper: float = Field(..., ge=0.0)
    depth: int = Field(..., ge=1)
    history: List[tuple[float, float]] = Field(default_factory=list,
                                               description="(running lower, running upper) per depth")

    @model_validator(mode="after")
    def _ordered(self) -> "RadiusBracket":
        if self.lower > self.upper * (1.0 + 1e-12) + 1e-300:
            raise ValueError(f"bracket lower {self.lower!r} exceeds upper {self.upper!r}")
        return self


# ── Optimizer ─────────────────────────────────────────────────────────────

class CayleyPoint(BaseModel):
    """Parameters of K weights in the diagonal-times-orthogonal class.

    Row k holds weight k: strict upper triangle of the skew matrix S_k, the
    ±1 sign diagonal of the Cayley map and the outer scale diagonal.
    """
    model_config = _ARRAY_MODEL

    m: int = Field(..., ge=1)
    skew_params: np.ndarray
    sign_diag: np.ndarray
    scale_diag: np.ndarray

    @model_validator(mode="after")
    def _check_shapes(self) -> "CayleyPoint":
        count = self.sign_diag.shape[0]
        tri = self.m * (self.m - 1) // 2
        if self.skew_params.shape != (count, tri):
            raise ValueError(f"skew_params: expected shape {(count, tri)}, got {self.skew_params.shape}")
        if self.sign_diag.shape != (count, self.m) or self.scale_diag.shape != (count, self.m):
            raise ValueError("sign_diag and scale_diag must have shape (count, m)")
        if not np.all(np.isin(self.sign_diag, (-1.0, 1.0))):
            raise ValueError("sign_diag entries must be ±1")
        if np.any(np.abs(self.scale_diag) > 1.0):
            raise ValueError("scale_diag entries must lie in [-1, 1]")
        if not np.all(np.isfinite(self.skew_params)):
            raise ValueError("skew_params must be finite")
        return self

    @property
    def count(self) -> int:
        return self.sign_diag.shape[0]


class OptimizerConfig(BaseModel):
    """Knobs of the sampled-gradient ascent with restarts."""
    model_config = ConfigDict(frozen=True)

    restarts: int = Field(32, ge=1)
    samples_per_iter: Optional[int] = Field(None, ge=1, description="default 2·parameter dimension")
    step_init: float = Field(0.1, gt=0.0)
    step_shrink: float = Field(0.5, gt=0.0, lt=1.0)
    max_iters: int = Field(200, ge=1)
    stall_tol: float = Field(1e-7, gt=0.0)
    rng_seed: int = Field(0, ge=0, lt=2**64)
    fd_step: float = Field(1e-6, gt=0.0, description="relative central-difference step")
    sample_radius: float = Field(1e-4, ge=0.0, description="radius of gradient-sampling perturbations")
    min_step: float = Field(1e-9, gt=0.0)
    discrete_rounds: int = Field(3, ge=0)
    seed_bounds: bool = Field(True, description="seed restarts from the Zhou and scalar bounds")


# ── Simulation ────────────────────────────────────────────────────────────

class TrajectoryEnsemble(BaseModel):
    """Per-step p-th moment estimates of ‖X(k)‖ over sampled switching paths."""
    model_config = _ARRAY_MODEL

    p: int = Field(..., ge=1)
    horizon: int = Field(..., ge=1)
    samples: int = Field(..., ge=1)
    rng_seed: int
    markov: bool = False
    per_step_moment: np.ndarray = Field(..., description="index k = 0..horizon; entry 0 is X(0) = I")
    log_moment: np.ndarray
    per_step_stderr: np.ndarray

    @model_validator(mode="after")
    def _check_lengths(self) -> "TrajectoryEnsemble":
        size = self.horizon + 1
        for label in ("per_step_moment", "log_moment", "per_step_stderr"):
            if getattr(self, label).shape != (size,):
                raise ValueError(f"{label}: expected {size} entries")
        if self.per_step_moment[0] != 1.0:
            raise ValueError("per_step_moment[0] must equal 1")
        return self


class RateEstimate(BaseModel):
    rate: float
    stderr: float
    tail_start: int
    tail_end: int
    slope: float


# ── Verdicts ──────────────────────────────────────────────────────────────

class VerdictStatus(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    UNDETERMINED = "undetermined"

    @property
    def exit_code(self) -> int:
        return {"stable": 0, "unstable": 1, "undetermined": 2}[self.value]


class Effort(BaseModel):
    """How hard stability_verdict may work before answering undetermined."""
    model_config = ConfigDict(frozen=True)

    k_max: int = Field(default_factory=lambda: settings.K_MAX, ge=1)
    jsr_depth: int = Field(default_factory=lambda: settings.JSR_DEPTH, ge=1)
    grid_resolution: int = Field(default_factory=lambda: settings.GRID_RESOLUTION, ge=2)
    optimize: bool = True
    m: Optional[int] = Field(None, ge=1, description="optimizer weight size; default n")
    optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(restarts=8))


class Verdict(BaseModel):
    status: VerdictStatus
    p: int
    witness: Optional[BoundReport] = None
    best_lower: Optional[float] = None
    best_upper: Optional[float] = None
    reports: List[BoundReport] = Field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return self.status.exit_code


# ── Problem files ─────────────────────────────────────────────────────────

Matrix = List[List[FiniteFloat]]


class WeightHint(BaseModel):
    """Candidate weights shipped with a problem (list for i.i.d., grid for Markov)."""
    model_config = ConfigDict(extra="forbid")

    label: str = "hint"
    weights: Optional[List[Matrix]] = None
    grid: Optional[List[List[Matrix]]] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "WeightHint":
        if (self.weights is None) == (self.grid is None):
            raise ValueError("give exactly one of 'weights' or 'grid'")
        return self


class ProblemFile(BaseModel):
    """On-disk problem: matrices, optional transition matrix, p and labels."""
    model_config = ConfigDict(extra="forbid")

    matrices: List[Matrix] = Field(..., min_length=1)
    transition: Optional[Matrix] = None
    p: int = Field(1, ge=1)
    metadata: Dict[str, Any] = Field(default_factory=dict)
    hints: List[WeightHint] = Field(default_factory=list)
