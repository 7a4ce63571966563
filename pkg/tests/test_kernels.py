import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqlearn.errors import FactorizationError, InputError
from gqlearn.kernels import (
    GAMMA_LADDER,
    MAX_COMPONENTS,
    GramMatrix,
    build_gram,
    centered_alignment,
    component_gammas,
    component_grams,
    cross_gram,
    factorize_inverse,
    mkl_combine,
    mkl_cross_gram,
    mkl_weights,
    rbf,
)

from oracles import lattice_toy


def random_points(rng, n, d=3, scale=2.0):
    return rng.normal(0.0, scale, (n, d))


class TestRbf:
    def test_zero_distance_is_one(self):
        x = np.array([0.3, -1.2, 4.0])
        assert rbf(x, x, 7.5) == 1.0

    def test_unit_distance_gamma_one(self):
        assert rbf(np.zeros(1), np.ones(1), 1.0) == pytest.approx(0.3678794, abs=1e-7)

    def test_half_gamma_two_axes(self):
        x, z = np.array([0.0, 0.0]), np.array([1.0, 1.0])
        assert rbf(x, z, 0.5) == pytest.approx(0.3678794, abs=1e-7)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            rbf(np.zeros(2), np.zeros(3), 1.0)


class TestBuildGram:
    def test_single_point(self):
        g = build_gram(np.array([[1.0, 2.0]]), 3.0)
        assert g.values.shape == (1, 1) and g.values[0, 0] == 1.0

    def test_identical_rows_give_ones(self):
        g = build_gram(np.array([[1.0, 2.0], [1.0, 2.0]]), 0.7)
        assert np.array_equal(g.values, np.ones((2, 2)))

    def test_matches_pairwise_scalar_evaluation(self, rng):
        X = random_points(rng, 3)
        g = build_gram(X, 1.0)
        for i in range(3):
            for j in range(3):
                assert g.values[i, j] == pytest.approx(rbf(X[i], X[j], 1.0), abs=1e-14)

    def test_cross_gram_matches_rbf(self, rng):
        Xa, Xb = random_points(rng, 4), random_points(rng, 2)
        kc = cross_gram(Xa, Xb, 0.3)
        assert kc.shape == (4, 2)
        for i in range(4):
            for j in range(2):
                assert kc[i, j] == pytest.approx(rbf(Xa[i], Xb[j], 0.3), abs=1e-14)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_gram_shape_invariants(self, seed):
        rng = np.random.default_rng(seed)
        X = random_points(rng, int(rng.integers(2, 12)))
        g = build_gram(X, float(10.0 ** rng.uniform(-3, 2)))
        v = g.values
        assert np.array_equal(v, v.T)
        assert np.array_equal(np.diagonal(v), np.ones(len(v)))
        # exact zeros occur when the exponential underflows for far pairs
        assert v.min() >= 0.0 and v.max() <= 1.0

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_growing_decay_shrinks_offdiagonals(self, seed):
        rng = np.random.default_rng(seed)
        X = random_points(rng, 6)
        lo = build_gram(X, 0.2).values
        hi = build_gram(X, 2.0).values
        off = ~np.eye(6, dtype=bool)
        assert np.all(hi[off] <= lo[off])


class TestGramMatrixValidation:
    def test_rejects_asymmetry(self):
        bad = np.eye(3)
        bad[0, 1] = 0.5
        with pytest.raises(InputError):
            GramMatrix(values=bad)

    def test_rejects_bad_diagonal(self):
        bad = np.full((2, 2), 0.5)
        with pytest.raises(InputError):
            GramMatrix(values=bad)

    def test_rejects_out_of_range(self):
        bad = np.array([[1.0, 1.5], [1.5, 1.0]])
        with pytest.raises(InputError):
            GramMatrix(values=bad)


class TestFactorizedInverse:
    def test_identity_case(self):
        X, _ = lattice_toy(3, 3)
        s = build_gram(X, 50.0)
        inv = factorize_inverse(s)
        assert np.abs(inv.matrix - np.eye(6)).max() < 1e-10

    def test_two_by_two_closed_form(self):
        s_val = rbf(np.zeros(1), np.ones(1), 0.25)
        s = build_gram(np.array([[0.0], [1.0]]), 0.25)
        inv = factorize_inverse(s)
        want = np.array([[1.0, -s_val], [-s_val, 1.0]]) / (1.0 - s_val**2)
        assert np.abs(inv.matrix - want).max() < 1e-12

    def test_residual_on_random_points(self, rng):
        X = random_points(rng, 20)
        s = build_gram(X, 1.0)
        inv = factorize_inverse(s)
        assert np.abs(s.values @ inv.matrix - np.eye(20)).max() < 1e-8

    def test_entry_and_solve_agree_with_matrix(self, rng):
        X = random_points(rng, 7)
        inv = factorize_inverse(build_gram(X, 0.5))
        assert inv.entry(2, 5) == pytest.approx(inv.matrix[2, 5], rel=1e-9)
        w = rng.normal(size=7)
        assert np.allclose(inv.solve(w), inv.matrix @ w, atol=1e-9)

    def test_indefinite_matrix_fails(self):
        ring = np.array(
            [
                [1.0, 0.9, 0.0, 0.9],
                [0.9, 1.0, 0.9, 0.0],
                [0.0, 0.9, 1.0, 0.9],
                [0.9, 0.0, 0.9, 1.0],
            ]
        )
        with pytest.raises(FactorizationError):
            factorize_inverse(GramMatrix(values=ring))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_reconstruction_invariant(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        X = random_points(rng, n)
        gamma = float(10.0 ** rng.uniform(-2, 2))
        inv = factorize_inverse(build_gram(X, gamma))
        assert np.abs(inv.source.values @ inv.matrix - np.eye(n)).max() < 1e-6


class TestMkl:
    def test_single_component_weight(self, rng):
        X = random_points(rng, 6)
        y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
        w = mkl_weights([build_gram(X, 1.0)], y)
        assert np.array_equal(w, np.array([1.0]))

    def test_identical_components_split_evenly(self, rng):
        X = random_points(rng, 6)
        y = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        g = build_gram(X, 1.0)
        w = mkl_weights([g, g], y)
        assert np.allclose(w, [0.5, 0.5], atol=1e-12)

    def test_aligned_kernel_outweighs_noise(self, rng):
        y = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
        X_aligned = np.vstack([np.zeros((4, 2)), np.full((4, 2), 3.0)])
        X_aligned += rng.normal(0.0, 0.05, (8, 2))
        X_noise = random_points(rng, 8, d=2, scale=3.0)
        k1 = build_gram(X_aligned, 0.5)
        k2 = build_gram(X_noise, 0.5)
        assert centered_alignment(k1, y) > centered_alignment(k2, y)
        w = mkl_weights([k1, k2], y)
        assert w[0] > w[1]

    def test_combine_passthrough(self, rng):
        g = build_gram(random_points(rng, 5), 1.0)
        assert np.array_equal(mkl_combine([g], [1.0]).values, g.values)

    def test_combine_self_average(self, rng):
        g = build_gram(random_points(rng, 5), 1.0)
        combined = mkl_combine([g, g], [0.5, 0.5])
        assert np.allclose(combined.values, g.values, atol=1e-15)

    def test_combine_entrywise(self, rng):
        g1 = build_gram(random_points(rng, 5), 0.5)
        g2 = build_gram(random_points(rng, 5), 2.0)
        got = mkl_combine([g1, g2], [0.3, 0.7]).values
        assert np.allclose(got, 0.3 * g1.values + 0.7 * g2.values, atol=1e-15)

    def test_combine_length_mismatch(self, rng):
        g = build_gram(random_points(rng, 4), 1.0)
        with pytest.raises(InputError):
            mkl_combine([g, g], [1.0])

    def test_component_gammas_prefix_of_ladder(self):
        assert component_gammas(4) == GAMMA_LADDER[:4]
        assert len(GAMMA_LADDER) == MAX_COMPONENTS
        with pytest.raises(InputError):
            component_gammas(MAX_COMPONENTS + 1)

    def test_mkl_cross_gram_matches_weighted_sum(self, rng):
        Xa, Xb = random_points(rng, 5), random_points(rng, 3)
        grams = component_grams(Xa, 3)
        y = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
        w = mkl_weights(grams, y)
        from gqlearn.kernels import MklCombo

        combo = MklCombo(gammas=component_gammas(3), weights=tuple(w))
        got = mkl_cross_gram(Xa, Xb, combo)
        want = sum(
            wi * cross_gram(Xa, Xb, gi) for wi, gi in zip(w, component_gammas(3))
        )
        assert np.allclose(got, want, atol=1e-14)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_weights_simplex_and_combined_psd(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 20))
        X = random_points(rng, n)
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        m = int(rng.integers(1, 5))
        grams = component_grams(X, m)
        w = mkl_weights(grams, y)
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) < 1e-12
        combined = mkl_combine(grams, w)
        assert np.linalg.eigvalsh(combined.values).min() > -1e-10

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_weights_permutation_equivariant(self, seed):
        rng = np.random.default_rng(seed)
        X = random_points(rng, 8)
        y = np.where(rng.random(8) < 0.5, 1.0, -1.0)
        grams = component_grams(X, 3)
        w = mkl_weights(grams, y)
        w_rev = mkl_weights(grams[::-1], y)
        assert np.allclose(w[::-1], w_rev, atol=1e-14)
