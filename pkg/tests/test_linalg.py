import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mpoc.linalg import (SingularMatrixError, box_qp, box_qp_enumerate, factorize, finalize,
                         kkt_residual, schur_complement)


def test_identity_and_hand_system():
    np.testing.assert_array_equal(factorize(sp.identity(5, format="csc")).solve(np.arange(5.0)),
                                  np.arange(5.0))
    x = factorize(sp.csc_matrix([[2.0, 1.0], [1.0, 2.0]]), symmetric=True).solve(np.array([3.0, 3.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-15)


def test_random_spd_residual():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((50, 50))
    A = sp.csc_matrix(M.T @ M + np.eye(50))
    b = rng.standard_normal(50)
    lu = factorize(A, symmetric=True)
    assert lu.residual(lu.solve(b), b) <= 1e-12
    # transpose solve and complex right-hand sides
    N = sp.csc_matrix(M + 8 * np.eye(50))
    lu = factorize(N)
    np.testing.assert_allclose(N.T @ lu.solve_transpose(b), b, atol=1e-11)
    z = lu.solve(b + 1j * b)
    np.testing.assert_allclose(N @ z, b + 1j * b, atol=1e-11)


def test_singular_reports_pivot():
    A = sp.csc_matrix(np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 2.0]]))
    with pytest.raises(SingularMatrixError) as exc:
        factorize(A)
    assert exc.value.pivot == 1


def test_finalize_sorted_without_duplicates():
    A = sp.csr_matrix((np.ones(3), ([0, 0, 0], [2, 0, 2])), shape=(1, 3))
    A = finalize(A)
    assert A.has_sorted_indices and A.nnz == 2


def test_schur_complement_cases():
    A = sp.csr_matrix(np.diag([2.0, 3.0, 4.0]))
    np.testing.assert_allclose(schur_complement(A, [2]), [[4.0]])
    B = np.array([[4.0, 1.0, 2.0], [1.0, 3.0, 0.5], [2.0, 0.5, 5.0]])
    # hand value: 5 - [2, .5] inv([[4,1],[1,3]]) [2, .5]^T
    inv = np.array([[3.0, -1.0], [-1.0, 4.0]]) / 11.0
    v = np.array([2.0, 0.5])
    S = schur_complement(sp.csr_matrix(B), [2])
    assert S[0, 0] == pytest.approx(5.0 - v @ inv @ v, abs=1e-12)


def test_schur_energy_identity():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((12, 12))
    A = M @ M.T + 12 * np.eye(12)
    g_idx = [1, 4, 7]
    S = schur_complement(sp.csr_matrix(A), g_idx)
    np.testing.assert_allclose(S, S.T, atol=1e-12)
    g = rng.standard_normal(3)
    i_idx = np.setdiff1d(np.arange(12), g_idx)
    # constrained minimum energy by a direct solve
    x = np.zeros(12)
    x[g_idx] = g
    x[i_idx] = -np.linalg.solve(A[np.ix_(i_idx, i_idx)], A[np.ix_(i_idx, g_idx)] @ g)
    assert g @ S @ g == pytest.approx(x @ A @ x, rel=1e-10)


def test_box_qp_examples():
    H = np.array([[3.0, 1.0], [1.0, 2.0]])
    c = np.array([-1.0, 0.5])
    x = box_qp(H, c, -10 * np.ones(2), 10 * np.ones(2))
    np.testing.assert_allclose(x, -np.linalg.solve(H, c), atol=1e-12)
    x = box_qp(np.eye(4), -2 * np.ones(4), np.zeros(4), np.ones(4))
    np.testing.assert_allclose(x, np.ones(4))


def test_box_qp_rejects_large():
    with pytest.raises(ValueError):
        box_qp(np.eye(1001), np.zeros(1001), -np.ones(1001), np.ones(1001))


def _random_qp(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    return H, 3 * rng.standard_normal(n), -rng.random(n), rng.random(n)


def _check_qp(H, c, lo, hi):
    x = box_qp(H, c, lo, hi)
    assert kkt_residual(H, c, lo, hi, x) <= 1e-9
    np.testing.assert_allclose(x, box_qp_enumerate(H, c, lo, hi), atol=1e-9)


@pytest.mark.parametrize("seed", [0, 1])
def test_box_qp_matches_enumeration_dim10(seed):
    _check_qp(*_random_qp(seed, 10))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_box_qp_matches_enumeration(seed, n):
    _check_qp(*_random_qp(seed, n))
