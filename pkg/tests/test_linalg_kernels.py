import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import jacobi_singular_values, min_norm_ridge, soft_threshold_loop
from rankalign.exceptions import ArgumentError, ConvergenceError
from rankalign.linalg_kernels import (
    Rank1Factors,
    least_squares_apply,
    pseudo_inverse,
    rank1_project,
    soft_threshold,
    spectral_norm,
    thin_qr,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_side=8):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(float, s, elements=finite))


class TestSoftThreshold:
    def test_zero_fixed_point(self):
        assert np.array_equal(soft_threshold(np.zeros((3, 4)), 1.0), np.zeros((3, 4)))

    def test_direct_formula(self):
        out = soft_threshold(np.array([[2.0, -0.5], [1.0, -3.0]]), 1.0)
        assert np.array_equal(out, np.array([[1.0, 0.0], [0.0, -2.0]]))

    def test_matches_loop_oracle(self):
        X = np.random.default_rng(0).normal(size=(8, 5))
        assert np.array_equal(soft_threshold(X, 0.3), soft_threshold_loop(X, 0.3))

    def test_negative_threshold_rejected(self):
        with pytest.raises(ArgumentError):
            soft_threshold(np.ones((2, 2)), -0.1)

    def test_non_finite_rejected(self):
        with pytest.raises(ArgumentError):
            soft_threshold(np.array([[np.nan]]), 0.1)

    @given(matrices(), st.floats(0, 10))
    def test_shrinks_and_keeps_sign(self, X, zeta):
        Y = soft_threshold(X, zeta)
        assert np.all(np.abs(Y) <= np.abs(X))
        assert np.all(np.sign(Y) * np.sign(X) >= 0)

    @given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 5), st.integers(0, 10_000))
    def test_nonexpansive(self, m, n, zeta, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.normal(size=(m, n)) * 3, rng.normal(size=(m, n)) * 3
        lhs = np.linalg.norm(soft_threshold(X, zeta) - soft_threshold(Y, zeta))
        assert lhs <= np.linalg.norm(X - Y) + 1e-12


class TestRank1:
    def test_rank1_input_reproduced(self):
        rng = np.random.default_rng(1)
        u, v = rng.normal(size=7), rng.normal(size=4)
        X = 2.5 * np.outer(u, v)
        f = rank1_project(X)
        assert np.abs(f.matrix() - X).max() < 1e-10

    def test_dominant_axis(self):
        f = rank1_project(np.diag([3.0, 1.0]))
        assert f.sigma == pytest.approx(3.0, abs=1e-12)
        assert np.allclose(f.matrix(), np.diag([3.0, 0.0]), atol=1e-10)

    def test_factor_invariants(self):
        f = rank1_project(np.random.default_rng(2).normal(size=(9, 5)))
        assert abs(np.linalg.norm(f.u) - 1) < 1e-12 and abs(np.linalg.norm(f.v) - 1) < 1e-12
        assert f.sigma >= 0
        assert f.u[np.flatnonzero(f.u)[0]] > 0

    def test_zero_matrix(self):
        f = rank1_project(np.zeros((3, 2)))
        assert f.sigma == 0 and np.linalg.norm(f.u) == 1 and np.linalg.norm(f.v) == 1

    def test_residual_matches_jacobi_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            X = rng.normal(size=(20, 10))
            s = jacobi_singular_values(X)
            f = rank1_project(X)
            assert abs(np.linalg.norm(X - f.matrix()) - np.sqrt(np.sum(s[1:] ** 2))) < 1e-8

    def test_perturbations_never_better(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(12, 6))
        f = rank1_project(X)
        base = np.linalg.norm(X - f.matrix())
        for _ in range(100):
            s = f.sigma + rng.normal() * 1e-3
            u = f.u + rng.normal(size=12) * 1e-3
            v = f.v + rng.normal(size=6) * 1e-3
            assert np.linalg.norm(X - s * np.outer(u, v)) >= base - 1e-12

    def test_non_convergence_carries_last_iterate(self):
        # equal top singular values defeat power iteration within one sweep
        X = np.random.default_rng(5).normal(size=(30, 20))
        with pytest.raises(ConvergenceError) as info:
            rank1_project(X, tol=1e-300, max_sweeps=1, exact_fallback=False)
        assert isinstance(info.value.last, Rank1Factors)

    def test_near_tie_falls_back_to_exact(self):
        X = np.diag([1.0, 0.999, 0.5])
        X = np.vstack([X, np.zeros((2, 3))])
        f = rank1_project(X)
        assert f.sigma == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(X - f.matrix()) == pytest.approx(np.hypot(0.999, 0.5), abs=1e-12)


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm(np.eye(5)) == pytest.approx(1.0, rel=1e-12)

    def test_rank1(self):
        rng = np.random.default_rng(6)
        u, v = rng.normal(size=6), rng.normal(size=3)
        X = 4.2 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        assert spectral_norm(X) == pytest.approx(4.2, rel=1e-8)

    def test_matches_oracle(self):
        X = np.random.default_rng(7).normal(size=(30, 7))
        assert spectral_norm(X) == pytest.approx(jacobi_singular_values(X)[0], rel=1e-8)

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
    def test_transpose_invariant(self, m, n, seed):
        X = np.random.default_rng(seed).normal(size=(m, n))
        assert abs(spectral_norm(X) - spectral_norm(X.T)) <= 1e-10 * max(1.0, spectral_norm(X))


class TestQR:
    def test_orthonormal_columns(self):
        Q0, _ = np.linalg.qr(np.random.default_rng(8).normal(size=(10, 4)))
        Q0 = Q0 * np.sign(np.diag(np.linalg.qr(Q0)[1]))  # any orthonormal columns
        Q, R = thin_qr(Q0)
        assert np.allclose(Q, Q0, atol=1e-12) and np.allclose(R, np.eye(4), atol=1e-12)

    def test_scaled_identity(self):
        res = thin_qr(2 * np.eye(3))
        assert np.allclose(res.Q, np.eye(3)) and np.allclose(res.R, 2 * np.eye(3)) and not res.deficient

    def test_random_residuals(self):
        J = np.random.default_rng(9).normal(size=(50, 8))
        Q, R = thin_qr(J)
        assert np.abs(Q.T @ Q - np.eye(8)).max() < 1e-10
        assert np.abs(Q @ R - J).max() < 1e-10
        assert np.allclose(R, np.triu(R)) and np.all(np.diag(R) >= 0)

    def test_rank_deficiency_flagged(self):
        J = np.random.default_rng(10).normal(size=(20, 3))
        J[:, 2] = J[:, 0]
        assert thin_qr(J).deficient == (2,)

    def test_wide_rejected(self):
        with pytest.raises(ArgumentError):
            thin_qr(np.ones((2, 3)))


class TestLeastSquares:
    def test_identity(self):
        r = np.arange(4.0)
        assert np.allclose(least_squares_apply(np.eye(4), r), r)

    def test_consistent_overdetermined(self):
        rng = np.random.default_rng(11)
        J, x0 = rng.normal(size=(30, 5)), rng.normal(size=5)
        assert np.abs(least_squares_apply(J, J @ x0) - x0).max() < 1e-10

    def test_min_norm_duplicated_columns(self):
        rng = np.random.default_rng(12)
        J = rng.normal(size=(15, 3))
        J = np.hstack([J, J[:, :1]])
        r = rng.normal(size=15)
        assert np.allclose(least_squares_apply(J, r), min_norm_ridge(J, r), atol=1e-6)
        assert np.allclose(pseudo_inverse(J) @ r, least_squares_apply(J, r), atol=1e-10)

    @given(st.integers(3, 12), st.integers(1, 3), st.integers(0, 10_000))
    def test_residual_orthogonal(self, m, d, seed):
        rng = np.random.default_rng(seed)
        J, r = rng.normal(size=(m, d)), rng.normal(size=m)
        x = least_squares_apply(J, r)
        assert np.abs(J.T @ (J @ x - r)).max() < 1e-8
