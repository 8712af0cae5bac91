import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hilbert_clt import linalg as la
from hilbert_clt.linalg import CovOperator

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(d):
    return arrays(np.float64, (d, d), elements=finite)


class TestInner:
    def test_orthogonal_basis(self):
        assert la.inner([1, 0], [0, 1]) == 0

    def test_parseval(self):
        assert la.inner([1, 2], [1, 2]) == 5

    def test_matches_direct_sum(self, rng):
        u, v = rng.normal(size=8), rng.normal(size=8)
        brute = sum(a * b for a, b in zip(u, v))
        assert la.inner(u, v) == pytest.approx(brute, rel=1e-14)

    def test_dimension_mismatch_names_both(self):
        with pytest.raises(ValueError, match="3.*2"):
            la.inner([1, 2, 3], [1, 2])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            la.inner([1, np.nan], [1, 2])

    @given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
    def test_symmetric_and_positive(self, u, v):
        assert la.inner(u, v) == la.inner(v, u)
        assert la.inner(u, u) >= 0
        assert la.inner(u, u) == pytest.approx(la.norm(u) ** 2, rel=1e-12, abs=1e-12)


class TestNorms:
    def test_identity_operator_norm(self):
        assert la.operator_norm(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal_operator_norm(self):
        assert la.operator_norm(np.diag([3, 1, 0.5])) == pytest.approx(3.0)

    def test_operator_norm_vs_svd(self, rng):
        b = rng.normal(size=(5, 5))
        # independent routine: power iteration on B^T B
        v = rng.normal(size=5)
        for _ in range(2000):
            v = b.T @ (b @ v)
            v /= np.linalg.norm(v)
        oracle = np.linalg.norm(b @ v)
        assert la.operator_norm(b) == pytest.approx(oracle, abs=1e-10)
        assert la.operator_norm(b) == pytest.approx(np.linalg.svd(b, compute_uv=False)[0], abs=1e-10)

    def test_zero_operator(self):
        assert la.operator_norm(np.zeros((3, 3))) == 0

    def test_hs_identity(self):
        assert la.hs_norm(np.eye(4)) == pytest.approx(2.0)

    def test_trace_diagonal(self):
        assert la.trace(np.diag([1, 0.5, 0.25])) == pytest.approx(1.75)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            la.operator_norm(np.array([[np.inf, 0], [0, 1]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            la.trace(np.zeros((2, 3)))

    @settings(max_examples=50)
    @given(square(5))
    def test_norm_ordering(self, b):
        assert la.operator_norm(b) <= la.hs_norm(b) * (1 + 1e-12) + 1e-12

    @settings(max_examples=50)
    @given(square(5))
    def test_adjoint_norm_equality(self, b):
        assert la.operator_norm(la.adjoint(b)) == pytest.approx(la.operator_norm(b), abs=1e-10, rel=1e-10)

    @given(square(4), square(4), finite, finite)
    def test_trace_linearity(self, b1, b2, a, c):
        lhs = la.trace(a * b1 + c * b2)
        rhs = a * la.trace(b1) + c * la.trace(b2)
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(rhs)) + 1e-9)


class TestAlgebra:
    def test_adjoint_involution(self, rng):
        b = rng.normal(size=(4, 4))
        assert np.array_equal(la.adjoint(la.adjoint(b)), b)

    def test_compose_and_apply(self, rng):
        a, b, v = rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)
        np.testing.assert_allclose(la.apply(la.compose(a, b), v), a @ (b @ v), rtol=1e-13)

    def test_compose_dimension_mismatch(self):
        with pytest.raises(ValueError):
            la.compose(np.eye(2), np.eye(3))

    def test_apply_dimension_mismatch(self):
        with pytest.raises(ValueError):
            la.apply(np.eye(2), [1.0, 2.0, 3.0])


class TestSingularValues:
    def test_diagonal(self):
        np.testing.assert_allclose(la.singular_values(np.diag([-2.0, 1.0])), [2, 1])

    def test_zero(self):
        np.testing.assert_array_equal(la.singular_values(np.zeros((3, 3))), np.zeros(3))

    def test_btb_oracle(self, rng):
        b = rng.normal(size=(6, 6))
        oracle = np.sqrt(la.eig_psd(b.T @ b).eigenvalues)
        np.testing.assert_allclose(la.singular_values(b), oracle, atol=1e-10)

    def test_first_is_operator_norm(self, rng):
        b = rng.normal(size=(7, 7))
        assert la.singular_values(b)[0] == pytest.approx(la.operator_norm(b), abs=1e-12)

    def test_descending_nonnegative(self, rng):
        s = la.singular_values(rng.normal(size=(9, 9)))
        assert np.all(s >= 0) and np.all(np.diff(s) <= 0)

    @settings(max_examples=100)
    @given(square(6), square(6))
    def test_perturbation_inequality(self, k, l):
        gap = np.abs(la.singular_values(k) - la.singular_values(l))
        assert np.all(gap <= la.operator_norm(k - l) + 1e-9 * (1 + la.hs_norm(k) + la.hs_norm(l)))


class TestEigPsd:
    def test_diagonal(self):
        np.testing.assert_allclose(la.eig_psd(np.diag([2.0, 1.0])).eigenvalues, [2, 1])

    def test_rank_one_projector(self):
        v = np.array([1.0, 1.0]) / np.sqrt(2)
        c = la.eig_psd(np.outer(v, v))
        np.testing.assert_allclose(c.eigenvalues, [1, 0], atol=1e-15)
        assert c.rank == 1

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_small_d_characteristic_polynomial(self, rng, d):
        m = rng.normal(size=(d, d))
        c = m @ m.T
        roots = np.sort(np.roots(np.poly(c)).real)[::-1]
        np.testing.assert_allclose(la.eig_psd(c).eigenvalues, roots, rtol=1e-7, atol=1e-9)

    def test_wishart_reconstruction(self, rng):
        m = rng.normal(size=(13, 13))
        cov = la.eig_psd(m @ m.T)
        v, lam = cov.eigenvectors, cov.eigenvalues
        recon = v @ np.diag(lam) @ v.T
        assert np.max(np.abs(recon - m @ m.T)) < 1e-8
        np.testing.assert_allclose(v.T @ v, np.eye(13), atol=1e-8)
        assert cov.trace() == pytest.approx(np.trace(m @ m.T), rel=1e-8)
        assert np.all(np.diff(lam) <= 0)

    def test_tiny_negative_clipped(self):
        c = la.eig_psd(np.diag([1.0, -5e-9]))
        assert c.eigenvalues[-1] == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="not PSD"):
            la.eig_psd(np.diag([1.0, -1e-3]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            la.eig_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_psd_project_records_clipped_mass(self):
        c = la.psd_project(np.diag([1.0, -0.2, 0.5]))
        np.testing.assert_allclose(c.eigenvalues, [1.0, 0.5, 0.0])
        assert c.clipped_mass == pytest.approx(0.2)


class TestCovOperator:
    def test_from_spectrum(self, rng):
        q = la.random_rotation(5, rng)
        c = CovOperator.from_spectrum([3, 2, 1, 0.5, 0.0], q)
        np.testing.assert_allclose(c.op, q @ np.diag([3, 2, 1, 0.5, 0]) @ q.T, atol=1e-14)
        assert c.rank == 4

    def test_sqrt_squares_to_op(self, rng):
        m = rng.normal(size=(4, 4))
        c = CovOperator.from_matrix(m @ m.T)
        np.testing.assert_allclose(c.sqrt() @ c.sqrt().T, c.op, atol=1e-12)

    def test_rotation_is_orthogonal(self, rng):
        q = la.random_rotation(7, rng)
        np.testing.assert_allclose(q @ q.T, np.eye(7), atol=1e-12)
