# Test type: Property Test
# Validation to be executed: Randomized identities and inequalities over 100
#   seeded trials each (fixed master seed).
# Command: pytest test/test_properties.py -v

"""Seeded randomized checks of the identities the bounds rely on."""

import numpy as np
import pytest

from app.models.schemas import CayleyPoint, MarkovModel, MatrixFamily
from app.services.linalg_core import kron, operator_norm, spectral_radius
from app.services.lower_bounds import complex_embed, lambda_w, pad_weights, product_family
from app.services.markov_radius import markov_h_k, markov_lambda, omega_lift
from app.services.radius_core import exact_even_p, exact_invariant_cone, h_k, h_sequence, lift_p_to_1
from app.services.weight_optimizer import cayley_orthogonal, materialize, skew_from_params

MASTER_SEED = 20240611
TRIALS = 100


def _rngs():
    seeds = np.random.SeedSequence(MASTER_SEED).spawn(TRIALS)
    return [np.random.default_rng(s) for s in seeds]


def _family(rng, count=2, n=2) -> MatrixFamily:
    return MatrixFamily(members=list(rng.normal(scale=0.7, size=(count, n, n))))


def _model(rng, count=2, n=2) -> MarkovModel:
    raw = rng.uniform(0.05, 1.0, size=(count, count))
    return MarkovModel(family=_family(rng, count, n), transition=raw / raw.sum(axis=1, keepdims=True))


def _weights(rng, count, m):
    point = CayleyPoint(
        m=m,
        skew_params=rng.normal(size=(count, m * (m - 1) // 2)),
        sign_diag=rng.choice((-1.0, 1.0), size=(count, m)),
        scale_diag=rng.uniform(-1.0, 1.0, size=(count, m)),
    )
    return materialize(point)


# ── Upper sequence ────────────────────────────────────────────────────────

class TestUpperSequence:
    def test_doubling_and_multiples_never_increase(self):
        for rng in _rngs():
            values = h_sequence(_family(rng), int(rng.integers(1, 4)), 6)
            for k in (1, 2, 3):
                assert values[2 * k - 1] <= values[k - 1] * (1 + 1e-12)
            assert values[5] <= values[1] * (1 + 1e-12)
            assert values[5] <= values[2] * (1 + 1e-12)

    def test_certified_lower_below_every_h_k(self):
        for rng in _rngs():
            family = _family(rng)
            lower = lambda_w(family, _weights(rng, family.count, 2))
            assert all(lower <= v * (1 + 1e-9) for v in h_sequence(family, 1, 6))

    def test_h_k_above_even_p_radius(self):
        for rng in _rngs():
            family = _family(rng)
            exact = exact_even_p(family, 2)
            assert all(v >= exact - 1e-9 for v in h_sequence(family, 2, 5))


# ── Exact formulas ────────────────────────────────────────────────────────

class TestExactFormulas:
    def test_even_p_and_cone_agree_on_nonnegative_families(self):
        for rng in _rngs():
            family = MatrixFamily(members=list(rng.uniform(0.0, 1.0, size=(2, 2, 2))))
            assert exact_invariant_cone(family, 2) == pytest.approx(exact_even_p(family, 2), rel=1e-12)


# ── Lifts ─────────────────────────────────────────────────────────────────

class TestLifts:
    def test_p_to_1_lift(self):
        for rng in _rngs():
            family = _family(rng)
            p = int(rng.integers(2, 4))
            lifted = lift_p_to_1(family, p)
            for k in (1, 2, 3):
                assert h_k(lifted, 1, k) == pytest.approx(h_k(family, p, k) ** p, rel=1e-9)

    def test_omega_lift(self):
        for rng in _rngs():
            model = _model(rng)
            p = int(rng.integers(1, 3))
            lifted = omega_lift(model, p)
            for k in (1, 2, 3):
                assert h_k(lifted, p, k) == pytest.approx(markov_h_k(model, p, k), rel=1e-9)

    def test_uniform_chain_factor(self):
        for rng in _rngs():
            family = _family(rng, count=3)
            model = MarkovModel(family=family, transition=np.full((3, 3), 1.0 / 3.0))
            p, k = int(rng.integers(1, 3)), int(rng.integers(1, 4))
            expected = 3.0 ** (1.0 / (k * p)) * h_k(family, p, k)
            assert markov_h_k(model, p, k) == pytest.approx(expected, rel=1e-9)


# ── Weights ───────────────────────────────────────────────────────────────

class TestWeights:
    def test_padding_invariance(self):
        for rng in _rngs():
            family = _family(rng)
            weights = _weights(rng, family.count, 2)
            padded = pad_weights(weights, 3)
            assert lambda_w(family, padded) == pytest.approx(lambda_w(family, weights), rel=1e-9, abs=1e-12)

    def test_weighted_squaring_identity(self):
        for rng in _rngs():
            family = _family(rng)
            weights = _weights(rng, family.count, 2)
            squared = product_family(MatrixFamily(members=weights.weights), 2)
            expected = lambda_w(product_family(family, 2), squared.members)
            assert lambda_w(family, weights) ** 2 == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_uniform_chain_block_matrix(self):
        for rng in _rngs():
            family = _family(rng)
            weights = _weights(rng, family.count, 2)
            model = MarkovModel(family=family, transition=np.full((2, 2), 0.5))
            grid = np.stack([np.stack([w, w]) for w in weights.weights])
            assert markov_lambda(model, grid) == pytest.approx(lambda_w(family, weights), rel=1e-7, abs=1e-10)

    def test_cayley_orthogonality(self):
        for rng in _rngs():
            m = int(rng.integers(2, 5))
            skew = skew_from_params(rng.normal(scale=2.0, size=m * (m - 1) // 2), m)
            q = cayley_orthogonal(skew, rng.choice((-1.0, 1.0), size=m))
            assert np.linalg.norm(q @ q.T - np.eye(m)) <= 1e-9

    def test_complex_embedding(self):
        for rng in _rngs():
            w1 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            w2 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            assert spectral_radius(complex_embed(w1)) == pytest.approx(spectral_radius(w1), rel=1e-9)
            assert operator_norm(complex_embed(w1)) == pytest.approx(operator_norm(w1), rel=1e-9)
            np.testing.assert_allclose(complex_embed(w1 @ w2), complex_embed(w1) @ complex_embed(w2),
                                       atol=1e-12)


# ── Linear algebra ────────────────────────────────────────────────────────

class TestLinearAlgebra:
    def test_squaring_identity(self):
        for rng in _rngs():
            a = rng.normal(size=(3, 3))
            assert spectral_radius(a) ** 2 == pytest.approx(spectral_radius(a @ a), rel=1e-9)

    def test_mixed_product(self):
        for rng in _rngs():
            a, b, c, d = (rng.normal(size=(2, 2)) for _ in range(4))
            lhs = kron(a, c) @ kron(b, d)
            rhs = kron(a @ b, c @ d)
            assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1.0, np.linalg.norm(rhs))

    def test_norm_dominates_radius(self):
        for rng in _rngs():
            a = rng.normal(size=(3, 3))
            assert operator_norm(a) >= spectral_radius(a) - 1e-12
