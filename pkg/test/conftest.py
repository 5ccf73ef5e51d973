# Test type: Configuration
# Validation to be executed: Shared fixtures for all test modules
# Command: pytest test/ -v

"""Shared pytest fixtures: the worked-example families, weights and problem files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from app.models.schemas import MarkovModel, MarkovWeightSet, MatrixFamily, WeightSet

PROBLEMS_DIR = Path(__file__).resolve().parent.parent / "problems"

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])
IDENTITY = np.eye(2)

EXAMPLE3_A = [
    [[-0.87, -0.77], [1.17, -1.09]],
    [[0.14, 0.40], [0.89, -0.73]],
]
EXAMPLE3_W = [
    [[-0.71, -0.70], [0.70, -0.71]],
    [[0.85, 0.53], [0.53, -0.85]],
]
EXAMPLE4_A = [
    [[0.77, 0.80], [-0.60, 0.87]],
    [[-0.77, 0.83], [-0.70, -0.70]],
]
EXAMPLE4_Q = [[0.70, 0.30], [0.43, 0.57]]
EXAMPLE4_SCALAR_GRID = [
    [[[1.0]], [[1.0]]],
    [[[-1.0]], [[0.932]]],
]
EXAMPLE4_MATRIX_GRID = [
    [[[-0.412, -0.911], [0.911, -0.412]], [[0.839, -0.544], [0.544, 0.839]]],
    [[[-0.204, -0.979], [0.979, -0.204]], [[0.937, -0.349], [0.349, 0.937]]],
]


# ── Families ─────────────────────────────────────────────────────────────

@pytest.fixture
def rotation():
    """Quarter-turn rotation R = [[0, −1], [1, 0]]."""
    return ROTATION.copy()


@pytest.fixture
def example1_family():
    """{3I, R, R, R}: ρ_1 = 2N/(N+1) = 1.5 for N = 3."""
    return MatrixFamily.of(3.0 * IDENTITY, ROTATION, ROTATION, ROTATION)


@pytest.fixture
def example2_family():
    """{I, R, R², R³}: every product is orthogonal."""
    return MatrixFamily.of(IDENTITY, ROTATION, ROTATION @ ROTATION, ROTATION @ ROTATION @ ROTATION)


@pytest.fixture
def example3_family():
    return MatrixFamily(members=EXAMPLE3_A)


@pytest.fixture
def example3_weights():
    """Printed 2×2 weights for the two-matrix example (unchecked)."""
    return WeightSet(weights=EXAMPLE3_W)


@pytest.fixture
def half_identity():
    return MatrixFamily.of(0.5 * IDENTITY)


@pytest.fixture
def example4_model():
    return MarkovModel(family=MatrixFamily(members=EXAMPLE4_A), transition=EXAMPLE4_Q)


@pytest.fixture
def example4_scalar_grid():
    return MarkovWeightSet(weights=EXAMPLE4_SCALAR_GRID)


@pytest.fixture
def example4_matrix_grid():
    return MarkovWeightSet(weights=EXAMPLE4_MATRIX_GRID)


# ── Problem files ────────────────────────────────────────────────────────

@pytest.fixture
def problems_dir():
    return PROBLEMS_DIR


@pytest.fixture
def write_problem(tmp_path):
    """Write a problem dict (or raw text) to a temp file and return its path."""
    def _write(payload, name: str = "problem.json") -> str:
        path = tmp_path / name
        text = payload if isinstance(payload, str) else json.dumps(payload)
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
