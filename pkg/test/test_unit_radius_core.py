# Test type: Unit Test
# Validation to be executed: h_k upper bounds, exact p-radius formulas, the
#   p→1 Kronecker lift, the JSR bracket and the product budget.
# Command: pytest test/test_unit_radius_core.py -v

"""Unit tests for app.services.radius_core."""

import numpy as np
import pytest

from app.config import settings
from app.exceptions import BudgetExceededError, ConeConditionError, DimensionCapError
from app.models.schemas import BoundKind, MatrixFamily
from app.services.linalg_core import spectral_radius
from app.services.radius_core import (
    check_submultiplicative,
    exact_even_p,
    exact_invariant_cone,
    exact_p_radius,
    h_k,
    h_sequence,
    iter_levels,
    jsr_bracket,
    lift_p_to_1,
    upper_reports,
)

EXAMPLE3_H_P1 = [1.384290, 1.301368, 1.228775, 1.189672, 1.176351, 1.164110,
                 1.154281, 1.146769, 1.141123, 1.136239, 1.132211, 1.128769]
EXAMPLE3_H_P2 = [1.402111, 1.322882, 1.250881, 1.207993, 1.199920, 1.192623,
                 1.183673, 1.175731, 1.171282, 1.167622, 1.164186, 1.161050]


# ── Enumeration ───────────────────────────────────────────────────────────

class TestIterLevels:
    def test_products_apply_later_factors_on_the_left(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        levels = list(iter_levels(np.stack([a, b]), 0, 2))
        assert [t for t, _, _ in levels] == [1, 2]
        products = levels[1][1]
        np.testing.assert_array_equal(products[0], a @ a)
        np.testing.assert_array_equal(products[1], b @ a)

    def test_zero_probability_chains_pruned(self):
        stack = np.stack([np.eye(2), 2.0 * np.eye(2)])
        with np.errstate(divide="ignore"):
            log_q = np.log(np.array([[1.0, 0.0], [0.5, 0.5]]))
        levels = list(iter_levels(stack, 0, 3, log_q))
        assert all(products.shape[0] == 1 for _, products, _ in levels)


# ── h_k ───────────────────────────────────────────────────────────────────

class TestHSequence:
    def test_scaled_identity(self, half_identity):
        assert h_sequence(half_identity, 1, 5) == pytest.approx([0.5] * 5, rel=1e-12)

    def test_rotation_powers_are_one(self, example2_family):
        values = h_sequence(example2_family, 1, 6)
        assert values == pytest.approx([1.0] * 6, abs=1e-12)

    @pytest.mark.parametrize("p, expected", [(1, EXAMPLE3_H_P1), (2, EXAMPLE3_H_P2)])
    def test_two_matrix_example(self, example3_family, p, expected):
        assert h_sequence(example3_family, p, 12) == pytest.approx(expected, abs=2e-6)

    def test_single_term_matches_sequence(self, example3_family):
        assert h_k(example3_family, 1, 4) == pytest.approx(EXAMPLE3_H_P1[3], abs=2e-6)

    def test_doubling_never_increases(self, example3_family):
        values = h_sequence(example3_family, 1, 12)
        for k in range(1, 7):
            assert values[2 * k - 1] <= values[k - 1] + 1e-12

    def test_adjacent_terms_may_increase(self):
        # A² = I but ‖A‖ = 4, so h_3 = 4^{1/3} exceeds h_2 = 1.
        family = MatrixFamily.of([[0.0, 4.0], [0.25, 0.0]])
        values = h_sequence(family, 1, 3)
        assert values == pytest.approx([4.0, 1.0, 4.0 ** (1.0 / 3.0)], rel=1e-12)
        assert check_submultiplicative(values) == []

    def test_invalid_arguments(self, half_identity):
        with pytest.raises(ValueError):
            h_sequence(half_identity, 0, 3)
        with pytest.raises(ValueError):
            h_sequence(half_identity, 1, 0)

    def test_budget(self, example3_family, monkeypatch):
        monkeypatch.setattr(settings, "PRODUCT_BUDGET", 100)
        with pytest.raises(BudgetExceededError, match="budget of 100"):
            h_sequence(example3_family, 1, 7)

    def test_thread_count_does_not_change_values(self, example3_family, monkeypatch):
        serial = h_sequence(example3_family, 2, 8)
        monkeypatch.setattr(settings, "WORKERS", 3)
        assert h_sequence(example3_family, 2, 8) == serial


class TestUpperReports:
    def test_names_and_kind(self):
        reports = upper_reports([1.2, 1.1], 1)
        assert [r.name for r in reports] == ["h_1", "h_2"]
        assert all(r.kind is BoundKind.UPPER for r in reports)
        assert reports[1].value == 1.1

    def test_submultiplicative_violation_detected(self):
        assert check_submultiplicative([1.0, 1.2]) == [1]
        assert check_submultiplicative([1.0, 0.9, 0.95, 0.8]) == []


# ── Exact formulas ────────────────────────────────────────────────────────

class TestExact:
    def test_even_p_two_matrix_example(self, example3_family):
        assert exact_even_p(example3_family, 2) == pytest.approx(1.125395, abs=2e-6)

    def test_even_p_below_every_h_k(self, example3_family):
        exact = exact_even_p(example3_family, 2)
        assert all(v >= exact - 1e-12 for v in h_sequence(example3_family, 2, 8))

    def test_odd_p_rejected(self, example3_family):
        with pytest.raises(ValueError, match="even"):
            exact_even_p(example3_family, 1)

    def test_invariant_cone_p1_is_radius_of_mean(self):
        family = MatrixFamily.of([[0.5, 0.2], [0.1, 0.3]], [[0.4, 0.0], [0.0, 0.6]])
        expected = spectral_radius(np.mean(family.stack, axis=0))
        assert exact_invariant_cone(family, 1) == pytest.approx(expected, rel=1e-12)
        assert h_k(family, 1, 6) >= expected - 1e-12

    def test_invariant_cone_needs_nonnegative_entries(self, example3_family):
        with pytest.raises(ConeConditionError, match=r"members\[0\]"):
            exact_invariant_cone(example3_family, 1)

    def test_dispatcher(self, example3_family):
        assert exact_p_radius(example3_family, 1) is None
        report = exact_p_radius(example3_family, 2)
        assert report.kind is BoundKind.EXACT
        assert report.value == pytest.approx(1.125395, abs=2e-6)
        assert report.meta["residual"] < 1e-10

    def test_dispatcher_nonnegative_odd_p(self):
        family = MatrixFamily.of([[1.0, 1.0], [0.0, 1.0]], [[0.5, 0.0], [0.3, 0.2]])
        report = exact_p_radius(family, 3)
        assert report is not None
        assert "nonnegative" in report.notes


# ── Lift ──────────────────────────────────────────────────────────────────

class TestLift:
    def test_identity_p1(self, example3_family):
        assert lift_p_to_1(example3_family, 1) is example3_family

    def test_h_k_of_lift(self, example3_family):
        lifted = lift_p_to_1(example3_family, 2)
        assert lifted.n == 4
        for k in (1, 2, 3):
            assert h_k(lifted, 1, k) == pytest.approx(h_k(example3_family, 2, k) ** 2, rel=1e-10)

    def test_cap(self, example3_family, monkeypatch):
        monkeypatch.setattr(settings, "DIM_CAP", 4)
        with pytest.raises(DimensionCapError):
            lift_p_to_1(example3_family, 3)


# ── JSR bracket ───────────────────────────────────────────────────────────

class TestJsrBracket:
    def test_two_matrix_example(self, example3_family):
        bracket = jsr_bracket(example3_family, 8)
        assert bracket.lower == pytest.approx(1.359853, abs=2e-6)
        assert bracket.upper == pytest.approx(1.366216, abs=2e-6)
        assert len(bracket.history) == 8
        assert bracket.history[0][1] == pytest.approx(1.607131, abs=2e-6)

    def test_running_bounds_are_monotone(self, example3_family):
        history = jsr_bracket(example3_family, 6).history
        lowers = [lo for lo, _ in history]
        uppers = [up for _, up in history]
        assert lowers == sorted(lowers)
        assert uppers == sorted(uppers, reverse=True)

    def test_orthogonal_family_is_tight(self, example2_family):
        bracket = jsr_bracket(example2_family, 4)
        assert bracket.lower == pytest.approx(1.0, abs=1e-12)
        assert bracket.upper == pytest.approx(1.0, abs=1e-12)

    def test_default_depth_from_settings(self, example2_family, monkeypatch):
        monkeypatch.setattr(settings, "JSR_DEPTH", 3)
        assert jsr_bracket(example2_family).depth == 3

    def test_budget(self, example3_family, monkeypatch):
        monkeypatch.setattr(settings, "PRODUCT_BUDGET", 10)
        with pytest.raises(BudgetExceededError):
            jsr_bracket(example3_family, 5)
