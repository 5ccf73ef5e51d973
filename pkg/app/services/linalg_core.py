"""Dense small-matrix primitives shared by every bound computation.

1. Conversion / validation of user matrices.
2. Kronecker products and powers under the dimension cap.
3. Spectral radius and operator norm (single and batched).
4. Block assembly.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations
import logging
from typing import Sequence

import numpy as np

from app.config import settings
from app.exceptions import DimensionCapError

logger = logging.getLogger(__name__)


# ── Conversion ────────────────────────────────────────────────────────────

def as_matrix(value, *, name: str = "matrix", allow_complex: bool = False) -> np.ndarray:
    """Return *value* as a read-only 2-D float (or complex) array.

    Raises ``ValueError`` for non-2-D input, empty dimensions or
    non-finite entries.
    """
    dtype = np.complex128 if allow_complex and np.iscomplexobj(value) else np.float64
    try:
        arr = np.array(value, dtype=dtype, copy=True)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: entries must be real numbers ({exc})") from exc
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got {arr.ndim} dimension(s)")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name}: dimensions must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite (no NaN/Inf)")
    arr.setflags(write=False)
    return arr


def check_dimension(rows: int, what: str = "matrix", cap: int | None = None) -> None:
    """Raise :class:`DimensionCapError` when *rows* exceeds the configured cap."""
    cap = settings.DIM_CAP if cap is None else cap
    if rows > cap:
        raise DimensionCapError(rows, cap, what)


def _require_square(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name}: expected a square matrix, got shape {a.shape}")


# ── Kronecker ─────────────────────────────────────────────────────────────

def kron(a: np.ndarray, b: np.ndarray, cap: int | None = None) -> np.ndarray:
    """Kronecker product ``a ⊗ b``; entry ``[i·rb + k, j·cb + l] = a[i, j]·b[k, l]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    check_dimension(a.shape[0] * b.shape[0], "Kronecker product", cap)
    return np.kron(a, b)


def kron_power(a: np.ndarray, p: int, cap: int | None = None) -> np.ndarray:
    """p-fold Kronecker power ``a^{⊗p}`` (``p = 1`` returns a copy)."""
    if p < 1:
        raise ValueError(f"Kronecker power must be positive, got {p}")
    a = np.asarray(a)
    check_dimension(a.shape[0] ** p, f"Kronecker power of order {p}", cap)
    out = a.copy()
    for _ in range(p - 1):
        out = np.kron(out, a)
    return out


def batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of stacks: ``(..., m, m) ⊗ (..., n, n) → (..., mn, mn)``."""
    *lead, ra, ca = a.shape
    *_, rb, cb = b.shape
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(*lead, ra * rb, ca * cb)


# ── Spectral quantities ───────────────────────────────────────────────────

def spectral_radius(a: np.ndarray) -> float:
    """Maximum eigenvalue modulus of a square matrix.

    Uses the full QR-type eigen solver, so complex-conjugate dominant pairs
    (rotations) are handled exactly.
    """
    a = np.asarray(a)
    _require_square(a)
    if a.shape[0] == 1:
        return float(abs(a[0, 0]))
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def spectral_radius_with_residual(a: np.ndarray) -> tuple[float, float]:
    """Spectral radius plus the relative residual ``‖Av − λv‖ / ‖A‖`` of the dominant pair."""
    a = np.asarray(a)
    _require_square(a)
    vals, vecs = np.linalg.eig(a)
    idx = int(np.argmax(np.abs(vals)))
    lam, vec = vals[idx], vecs[:, idx]
    scale = np.linalg.norm(a, 2)
    if scale == 0.0:
        return 0.0, 0.0
    residual = np.linalg.norm(a @ vec - lam * vec) / (scale * max(np.linalg.norm(vec), 1e-300))
    return float(abs(lam)), float(residual)


def spectral_radii(stack: np.ndarray) -> np.ndarray:
    """Spectral radius of every matrix in a ``(B, d, d)`` stack.

    1×1 and 2×2 stacks use closed forms; larger ones the batched eigen solver.
    """
    stack = np.asarray(stack)
    _require_square(stack, "stack")
    d = stack.shape[-1]
    if stack.shape[0] == 0:
        return np.zeros(0)
    if d == 1:
        return np.abs(stack[:, 0, 0])
    if d == 2 and not np.iscomplexobj(stack):
        half_tr = 0.5 * (stack[:, 0, 0] + stack[:, 1, 1])
        det = stack[:, 0, 0] * stack[:, 1, 1] - stack[:, 0, 1] * stack[:, 1, 0]
        disc = half_tr * half_tr - det
        real_case = np.abs(half_tr) + np.sqrt(np.maximum(disc, 0.0))
        complex_case = np.sqrt(np.maximum(det, 0.0))
        return np.where(disc >= 0.0, real_case, complex_case)
    return np.max(np.abs(np.linalg.eigvals(stack)), axis=-1)


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    return float(np.linalg.norm(a, 2))


def operator_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of every matrix in a ``(B, r, c)`` stack."""
    stack = np.asarray(stack)
    if stack.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


# ── Block assembly ────────────────────────────────────────────────────────

def block_matrix(blocks: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """Assemble a rectangular grid of blocks into one matrix.

    Every block in a grid row must share its row count and every block in a
    grid column its column count.
    """
    grid = [[np.atleast_2d(np.asarray(b)) for b in row] for row in blocks]
    if not grid or not grid[0]:
        raise ValueError("block grid must be non-empty")
    width = len(grid[0])
    for r, row in enumerate(grid):
        if len(row) != width:
            raise ValueError(f"block row {r} has {len(row)} blocks, expected {width}")
    row_heights = [row[0].shape[0] for row in grid]
    col_widths = [grid[0][c].shape[1] for c in range(width)]
    for r, row in enumerate(grid):
        for c, block in enumerate(row):
            if block.shape != (row_heights[r], col_widths[c]):
                raise ValueError(
                    f"block ({r}, {c}) has shape {block.shape}, "
                    f"expected {(row_heights[r], col_widths[c])}"
                )
    check_dimension(sum(row_heights), "block matrix")
    return np.block(grid)
