import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastrx.errors import InvalidData, NonFiniteData, NotPositiveDefinite, ShapeMismatch
from fastrx.linalg import (
    DataMatrix,
    center_columns,
    covariance,
    default_ridge,
    pseudo_inverse,
    spd_solve_prepare,
)


def random_spd(rng, m):
    G = rng.standard_normal((m, m))
    return G @ G.T + m * np.eye(m)


class TestDataMatrix:
    def test_shape_must_cover_pixels(self):
        with pytest.raises(ShapeMismatch):
            DataMatrix(np.zeros((6, 2)), (2, 2))

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteData):
            DataMatrix(np.array([[1.0], [np.nan]]), (2, 1))

    def test_cube_round_trip(self, rng):
        cube = rng.standard_normal((3, 4, 5))
        dm = DataMatrix.from_array(cube)
        assert dm.n == 12 and dm.band_count == 5 and dm.shape == (3, 4)
        np.testing.assert_array_equal(dm.cube(), cube)


class TestCentering:
    def test_two_points(self):
        Xc, stats = center_columns([[1.0], [3.0]])
        np.testing.assert_array_equal(Xc, [[-1.0], [1.0]])
        np.testing.assert_array_equal(stats.column_means, [2.0])

    def test_zero_mean_unchanged(self):
        X = np.array([[1.0, -2.0], [-1.0, 2.0]])
        Xc, stats = center_columns(X)
        np.testing.assert_array_equal(Xc, X)
        np.testing.assert_array_equal(stats.column_means, [0.0, 0.0])

    def test_random_column_sums(self, rng):
        Xc, _ = center_columns(rng.standard_normal((10, 3)) * 5 + 2)
        assert np.all(np.abs(Xc.sum(axis=0)) < 1e-10)

    def test_idempotent(self, rng):
        X = rng.uniform(-3, 7, size=(40, 4))
        Xc, _ = center_columns(X)
        Xcc, stats2 = center_columns(Xc)
        np.testing.assert_allclose(Xcc, Xc, atol=1e-12)
        assert np.all(np.abs(stats2.column_means) < 1e-12)

    def test_stats_apply_to_test_pixels(self, rng):
        X = rng.standard_normal((20, 3))
        _, stats = center_columns(X)
        np.testing.assert_allclose(stats.apply(X[:2]), X[:2] - X.mean(axis=0))


class TestCovariance:
    def test_variance_of_pm_one(self):
        np.testing.assert_allclose(covariance([[-1.0], [1.0]]), [[1.0]])

    def test_orthogonal_columns(self):
        # columns of a scaled Hadamard matrix: orthogonal, norm sqrt(n)
        H = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float)
        np.testing.assert_allclose(covariance(H[:, 1:]), np.eye(3), atol=1e-15)

    def test_matches_outer_product_sum(self, rng):
        Xc, _ = center_columns(rng.standard_normal((50, 4)))
        brute = np.zeros((4, 4))
        for x in Xc:
            for i in range(4):
                for j in range(4):
                    brute[i, j] += x[i] * x[j]
        brute /= 50
        np.testing.assert_allclose(covariance(Xc), brute, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                  elements=st.floats(-1e3, 1e3)))
    def test_symmetric_psd(self, X):
        C = covariance(center_columns(X)[0])
        np.testing.assert_array_equal(C, C.T)
        w = np.linalg.eigvalsh(C)
        assert w.min() >= -1e-10 * max(w.max(), 1e-300)

    def test_scaling_only_rescales_rx_scores(self, rng):
        # a 1/d instead of 1/n normalization multiplies every score by d/n
        Xc, _ = center_columns(rng.standard_normal((60, 3)))
        C = covariance(Xc)
        s_n = np.einsum("ij,jk,ik->i", Xc, np.linalg.inv(C), Xc)
        s_d = np.einsum("ij,jk,ik->i", Xc, np.linalg.inv(C * 60 / 3), Xc)
        np.testing.assert_allclose(s_d * 60 / 3, s_n, rtol=1e-12)
        np.testing.assert_array_equal(np.argsort(s_d), np.argsort(s_n))


class TestSpdSolve:
    def test_identity(self):
        np.testing.assert_array_equal(spd_solve_prepare(np.eye(3), 0.0).solve([1.0, 0, 0]),
                                      [1.0, 0, 0])

    def test_diagonal(self):
        x = spd_solve_prepare(np.diag([2.0, 4.0]), 0.0).solve([2.0, 4.0])
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-15)

    def test_matches_dense_inverse(self, rng):
        A = random_spd(rng, 8)
        b = rng.standard_normal(8)
        np.testing.assert_allclose(spd_solve_prepare(A, 0.0).solve(b), np.linalg.inv(A) @ b,
                                   rtol=1e-8)

    @pytest.mark.parametrize("m", [5, 50, 500])
    def test_residual(self, rng, m):
        A = random_spd(rng, m)
        b = rng.standard_normal(m)
        solver = spd_solve_prepare(A)
        x = solver.solve(b)
        A_l = A + solver.ridge * np.eye(m)
        assert np.linalg.norm(A_l @ x - b) / np.linalg.norm(b) < 1e-8

    def test_quad_matches_solve(self, rng):
        A = random_spd(rng, 6)
        B = rng.standard_normal((4, 6))
        s = spd_solve_prepare(A, 0.1)
        np.testing.assert_allclose(s.quad(B), [b @ s.solve(b) for b in B], rtol=1e-12)

    def test_default_ridge(self):
        A = np.diag([1.0, 3.0])
        assert spd_solve_prepare(A).ridge == pytest.approx(2e-8)
        assert default_ridge(A) == pytest.approx(2e-8)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            spd_solve_prepare(np.diag([1.0, -1.0]), 0.0)

    def test_singular_without_ridge_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            spd_solve_prepare(np.zeros((2, 2)), 0.0)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidData):
            spd_solve_prepare(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPseudoInverse:
    def test_rank_one_diagonal(self):
        P = pseudo_inverse(np.diag([4.0, 0.0]))
        np.testing.assert_allclose(P.matrix(), np.diag([0.25, 0.0]), atol=1e-15)
        assert P.effective_rank == 1

    def test_identity(self):
        np.testing.assert_allclose(pseudo_inverse(np.eye(4)).matrix(), np.eye(4), atol=1e-15)

    def test_moore_penrose_low_rank(self, rng):
        R = rng.standard_normal((5, 3)) @ rng.standard_normal((3, 20))
        A = R @ R.T
        P = pseudo_inverse(A)
        Ap = P.matrix()
        assert P.effective_rank == 3
        np.testing.assert_allclose(A @ Ap @ A, A, rtol=0, atol=1e-6 * np.abs(A).max())
        np.testing.assert_allclose(Ap @ A @ Ap, Ap, rtol=0, atol=1e-6 * np.abs(Ap).max())
        np.testing.assert_allclose(Ap, Ap.T, atol=1e-12 * np.abs(Ap).max())
        assert np.linalg.eigvalsh(Ap).min() > -1e-10 * np.abs(Ap).max()
        np.testing.assert_allclose(Ap, np.linalg.pinv(A, rcond=1e-10, hermitian=True),
                                   atol=1e-8 * np.abs(Ap).max())

    @pytest.mark.parametrize("rank", [1, 4, 9])
    def test_effective_rank(self, rng, rank):
        B = rng.standard_normal((12, rank))
        assert pseudo_inverse(B @ B.T).effective_rank == rank

    def test_quad_and_apply(self, rng):
        B = rng.standard_normal((6, 2))
        P = pseudo_inverse(B @ B.T)
        v = rng.standard_normal((3, 6))
        np.testing.assert_allclose(P.quad(v), [x @ P.matrix() @ x for x in v], rtol=1e-10)
        np.testing.assert_allclose(P.apply(v.T), P.matrix() @ v.T, rtol=1e-10, atol=1e-12)

    def test_zero_matrix(self):
        assert pseudo_inverse(np.zeros((3, 3))).effective_rank == 0

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteData):
            pseudo_inverse(np.array([[np.inf, 0], [0, 1.0]]))
