# Test type: Unit Test
# Validation to be executed: Cayley parametrization, projection onto the
#   weight class, restart bookkeeping and optimizer regression values.
# Command: pytest test/test_unit_weight_optimizer.py -v

"""Unit tests for app.services.weight_optimizer."""

import numpy as np
import pytest

from app.models.schemas import CayleyPoint, Certificate, MatrixFamily, OptimizerConfig
from app.services.linalg_core import operator_norms
from app.services.lower_bounds import lambda_w, scalar_weight_bound, zhou_from_bracket
from app.services.radius_core import h_sequence
from app.services.weight_optimizer import (
    best_restart,
    cayley_orthogonal,
    cayley_parameters,
    materialize,
    optimize,
    project_to_class,
    skew_from_params,
)


# ── Cayley map ────────────────────────────────────────────────────────────

class TestCayley:
    def test_skew_layout(self):
        skew = skew_from_params(np.array([1.0, 2.0, 3.0]), 3)
        np.testing.assert_array_equal(skew, -skew.T)
        assert skew[0, 1] == 1.0 and skew[0, 2] == 2.0 and skew[1, 2] == 3.0

    def test_orthogonal_for_random_parameters(self):
        rng = np.random.default_rng(12)
        for m in (2, 3, 4):
            skew = skew_from_params(rng.normal(size=m * (m - 1) // 2), m)
            signs = rng.choice((-1.0, 1.0), size=m)
            q = cayley_orthogonal(skew, signs)
            np.testing.assert_allclose(q @ q.T, np.eye(m), atol=1e-9)

    def test_zero_skew_gives_sign_diagonal(self):
        q = cayley_orthogonal(np.zeros((2, 2)), np.array([1.0, -1.0]))
        np.testing.assert_array_equal(q, np.diag([1.0, -1.0]))

    def test_inverse_map(self, rotation):
        params, signs = cayley_parameters(rotation)
        rebuilt = cayley_orthogonal(skew_from_params(params, 2), signs)
        np.testing.assert_allclose(rebuilt, rotation, atol=1e-12)

    def test_projection_keeps_class_members(self, rotation):
        params, signs, scales = project_to_class(0.5 * rotation)
        rebuilt = scales[:, None] * cayley_orthogonal(skew_from_params(params, 2), signs)
        np.testing.assert_allclose(rebuilt, 0.5 * rotation, atol=1e-12)

    def test_materialize_is_norm_bounded(self):
        rng = np.random.default_rng(13)
        point = CayleyPoint(
            m=3,
            skew_params=rng.normal(size=(4, 3)),
            sign_diag=rng.choice((-1.0, 1.0), size=(4, 3)),
            scale_diag=rng.uniform(-1.0, 1.0, size=(4, 3)),
        )
        weights = materialize(point)
        assert weights.certificate is Certificate.NORM_BOUNDED
        assert weights.count == 4
        assert np.all(operator_norms(weights.stack) <= 1.0 + 1e-12)

    def test_point_shape_validation(self):
        with pytest.raises(ValueError):
            CayleyPoint(m=2, skew_params=np.zeros((2, 2)), sign_diag=np.ones((2, 2)),
                        scale_diag=np.ones((2, 2)))
        with pytest.raises(ValueError, match="±1"):
            CayleyPoint(m=2, skew_params=np.zeros((1, 1)), sign_diag=np.array([[1.0, 0.5]]),
                        scale_diag=np.ones((1, 2)))


# ── Optimizer ─────────────────────────────────────────────────────────────

class TestOptimize:
    def test_two_matrix_example_regression(self, example3_family):
        report = optimize(example3_family, 2)
        assert report.value >= 1.05
        assert report.certified
        assert report.value == pytest.approx(lambda_w(example3_family, report.witness), rel=1e-12)
        assert report.value <= min(h_sequence(example3_family, 1, 10)) + 1e-9

    def test_identity_and_rotations_optimum(self, example1_family):
        report = optimize(example1_family, 2)
        assert 1.49 <= report.value <= 1.5 + 1e-9

    def test_m1_uses_scalar_grid(self, example3_family):
        report = optimize(example3_family, 1)
        assert report.name == "optimized_m1"
        assert report.value == pytest.approx(scalar_weight_bound(example3_family).value)

    def test_deterministic_for_fixed_seed(self, example3_family):
        config = OptimizerConfig(restarts=3, max_iters=30, rng_seed=7)
        first = optimize(example3_family, 2, config)
        second = optimize(example3_family, 2, config)
        assert first.value == second.value
        assert first.meta["restart_values"] == second.meta["restart_values"]

    def test_restart_meta(self, example3_family):
        config = OptimizerConfig(restarts=4, max_iters=20)
        report = optimize(example3_family, 2, config)
        values = report.meta["restart_values"]
        assert len(values) == 4
        assert values[report.meta["best_restart"]] == max(values)
        assert report.meta["best_start"] in {"identity", "scalar", "zhou", "random"}

    def test_best_restart_prefers_lowest_index_on_ties(self):
        class R:
            def __init__(self, index, value):
                self.index, self.value = index, value
        assert best_restart([R(0, 1.0), R(1, 2.0), R(2, 2.0)]).index == 1


# ── Dominance over the closed-form seeds ─────────────────────────────────

class TestDominance:
    """With m = n the optimizer never reports less than the Zhou or scalar bound."""

    @pytest.mark.parametrize("seed", [101, 202, 303])
    def test_random_families(self, seed):
        rng = np.random.default_rng(seed)
        family = MatrixFamily(members=list(rng.normal(scale=0.7, size=(2, 2, 2))))
        report = optimize(family, 2, OptimizerConfig(restarts=2, max_iters=30, rng_seed=seed))
        zhou = zhou_from_bracket(family).value
        scalar = scalar_weight_bound(family).value
        assert report.value >= max(zhou, scalar) - 1e-6
        assert report.certified

    def test_two_matrix_example(self, example3_family):
        report = optimize(example3_family, 2, OptimizerConfig(restarts=1, max_iters=10))
        assert report.value >= zhou_from_bracket(example3_family).value - 1e-6
        assert report.value >= scalar_weight_bound(example3_family).value - 1e-6
