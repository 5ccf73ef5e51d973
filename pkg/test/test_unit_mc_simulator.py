# Test type: Unit Test
# Validation to be executed: Monte Carlo moment estimates, exact path
#   enumeration, growth-rate regression and reproducibility.
# Command: pytest test/test_unit_mc_simulator.py -v

"""Unit tests for app.services.mc_simulator."""

import numpy as np
import pytest

from app.config import settings
from app.exceptions import BudgetExceededError, DegenerateEstimateError
from app.models.schemas import MarkovModel, MatrixFamily
from app.services.markov_radius import markov_h_k
from app.services.mc_simulator import empirical_rate, exact_moments, simulate
from app.services.radius_core import h_k


# ── simulate ──────────────────────────────────────────────────────────────

class TestSimulate:
    def test_scaled_identity_is_geometric(self):
        family = MatrixFamily.of(0.9 * np.eye(2))
        ensemble = simulate(family, 2, 10, 50)
        expected = 0.9 ** (2 * np.arange(11))
        np.testing.assert_allclose(ensemble.per_step_moment, expected, rtol=1e-12)
        np.testing.assert_allclose(ensemble.per_step_stderr, 0.0, atol=1e-6)

    def test_rotation_powers_constant(self, example2_family):
        ensemble = simulate(example2_family, 1, 15, 200)
        np.testing.assert_allclose(ensemble.per_step_moment, 1.0, rtol=1e-12)

    def test_shapes_and_first_entry(self, example3_family):
        ensemble = simulate(example3_family, 1, 5, 10, seed=3)
        assert ensemble.per_step_moment.shape == (6,)
        assert ensemble.per_step_moment[0] == 1.0
        assert ensemble.rng_seed == 3
        assert not ensemble.markov

    def test_reproducible(self, example3_family):
        first = simulate(example3_family, 1, 8, 300, seed=11)
        second = simulate(example3_family, 1, 8, 300, seed=11)
        np.testing.assert_array_equal(first.per_step_moment, second.per_step_moment)

    def test_seed_matters(self, example3_family):
        first = simulate(example3_family, 1, 8, 300, seed=1)
        second = simulate(example3_family, 1, 8, 300, seed=2)
        assert not np.array_equal(first.per_step_moment, second.per_step_moment)

    def test_independent_of_thread_count(self, example3_family, monkeypatch):
        serial = simulate(example3_family, 1, 4, 5000, seed=5)
        monkeypatch.setattr(settings, "WORKERS", 4)
        threaded = simulate(example3_family, 1, 4, 5000, seed=5)
        np.testing.assert_array_equal(serial.log_moment, threaded.log_moment)

    def test_agrees_with_exact_moments(self, example3_family):
        ensemble = simulate(example3_family, 1, 3, 20000, seed=0)
        exact = exact_moments(example3_family, 1, 3)
        for k in (1, 2, 3):
            sigma = ensemble.per_step_stderr[k]
            assert abs(ensemble.per_step_moment[k] - exact[k - 1]) <= 5.0 * sigma

    def test_markov_chain_respected(self):
        # Absorbing chain started in mode 0 never sees mode 1.
        family = MatrixFamily.of(0.5 * np.eye(2), 2.0 * np.eye(2))
        model = MarkovModel(family=family, transition=[[1.0, 0.0], [0.0, 1.0]])
        ensemble = simulate(model, 1, 6, 100, initial_distribution=[1.0, 0.0])
        assert ensemble.markov
        np.testing.assert_allclose(ensemble.per_step_moment, 0.5 ** np.arange(7), rtol=1e-12)

    def test_invalid_arguments(self, example3_family):
        with pytest.raises(ValueError):
            simulate(example3_family, 0, 5, 10)
        with pytest.raises(ValueError):
            simulate(example3_family, 1, 0, 10)

    def test_bad_initial_distribution(self, example4_model):
        with pytest.raises(ValueError, match="2 entries"):
            simulate(example4_model, 1, 3, 10, initial_distribution=[1.0])
        with pytest.raises(ValueError, match="sums to"):
            simulate(example4_model, 1, 3, 10, initial_distribution=[0.5, 0.4])


# ── exact_moments ─────────────────────────────────────────────────────────

class TestExactMoments:
    def test_iid_matches_h_k(self, example3_family):
        moments = exact_moments(example3_family, 2, 4)
        for k in range(1, 5):
            assert moments[k - 1] == pytest.approx(h_k(example3_family, 2, k) ** (2 * k), rel=1e-10)

    def test_markov_uniform_start(self, example4_model):
        moments = exact_moments(example4_model, 1, 4)
        for k in range(1, 5):
            assert moments[k - 1] == pytest.approx(markov_h_k(example4_model, 1, k) ** k / 2.0, rel=1e-10)

    def test_budget(self, example3_family, monkeypatch):
        monkeypatch.setattr(settings, "PRODUCT_BUDGET", 10)
        with pytest.raises(BudgetExceededError):
            exact_moments(example3_family, 1, 5)


# ── empirical_rate ────────────────────────────────────────────────────────

class TestEmpiricalRate:
    def test_geometric_rate(self):
        ensemble = simulate(MatrixFamily.of(0.9 * np.eye(2)), 1, 20, 10)
        estimate = empirical_rate(ensemble)
        assert estimate.rate == pytest.approx(0.9, rel=1e-10)
        assert estimate.stderr == pytest.approx(0.0, abs=1e-10)
        assert (estimate.tail_start, estimate.tail_end) == (11, 20)

    def test_full_window(self):
        ensemble = simulate(MatrixFamily.of(1.1 * np.eye(3)), 2, 10, 5)
        estimate = empirical_rate(ensemble, tail_fraction=1.0)
        assert estimate.tail_start == 1
        assert estimate.rate == pytest.approx(1.1, rel=1e-10)

    def test_vanishing_moments(self):
        ensemble = simulate(MatrixFamily.of(np.zeros((2, 2))), 1, 6, 10)
        with pytest.raises(DegenerateEstimateError, match="vanish"):
            empirical_rate(ensemble)

    def test_too_short(self):
        ensemble = simulate(MatrixFamily.of(np.eye(2)), 1, 1, 10)
        with pytest.raises(DegenerateEstimateError):
            empirical_rate(ensemble)

    def test_bad_fraction(self, example3_family):
        ensemble = simulate(example3_family, 1, 4, 10)
        with pytest.raises(ValueError, match="tail_fraction"):
            empirical_rate(ensemble, 0.0)
