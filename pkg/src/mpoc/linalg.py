"""Sparse direct solves, Schur complements and a small box-constrained QP."""
from __future__ import annotations

import itertools
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    """Factorization hit a (numerically) zero pivot."""

    def __init__(self, msg, pivot=None):
        super().__init__(msg)
        self.pivot = pivot


def finalize(A):
    """Return ``A`` as CSR with summed duplicates and sorted indices."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _zero_line(A):
    """Index of the first identically zero column or row, if any."""
    for B in (A, A.T):
        nrm = np.asarray(abs(sp.csc_matrix(B)).sum(axis=0)).ravel()
        hit = np.flatnonzero(nrm == 0)
        if hit.size:
            return int(hit[0])
    return None


def is_symmetric(A, rtol=1e-12):
    A = sp.csr_matrix(A)
    d = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return (d.max() if d.nnz else 0.0) <= rtol * max(scale, 1e-300)


class Factorization:
    """Reusable sparse LU factorization.

    Symmetric matrices use a symmetric fill-reducing ordering
    (minimum degree on A + A^T) with diagonal pivoting preferred, which
    keeps the factors symmetric in structure.

    Parameters
    ----------
    A : sparse matrix
        Square matrix.
    symmetric : bool
        Use the symmetric ordering and diagonal pivoting.
    pivot_tol : float
        Relative size below which a pivot of U counts as zero.
    """

    def __init__(self, A, symmetric=False, pivot_tol=1e-13):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        self.symmetric = symmetric
        self.dtype = A.dtype
        self._A = A
        opts = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options=dict(SymmetricMode=True)) if symmetric else dict(permc_spec="COLAMD")
        n = A.shape[0]
        if n == 0:
            self._lu = None
            return
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
                self._lu = spla.splu(A, **opts)
        except RuntimeError as exc:
            piv = _zero_line(A)
            where = "" if piv is None else f" (zero row/column {piv})"
            raise SingularMatrixError(f"factorization failed: {exc}{where}", pivot=piv) from None
        udiag = np.abs(self._lu.U.diagonal())
        scale = max(abs(A).max(), 1e-300)
        small = np.flatnonzero(udiag <= pivot_tol * scale)
        if small.size:
            # map the pivot position back to an original column index
            piv = int(self._lu.perm_c[small[0]])
            raise SingularMatrixError(f"singular pivot at index {piv}", pivot=piv)

    def solve(self, b, trans="N"):
        b = np.asarray(b)
        if self._lu is None:
            return np.zeros_like(b)
        if np.iscomplexobj(b) and not np.iscomplexobj(np.empty(0, self.dtype)):
            return self._lu.solve(b.real.copy(), trans) + 1j * self._lu.solve(b.imag.copy(), trans)
        return self._lu.solve(np.ascontiguousarray(b, dtype=np.result_type(b, self.dtype)), trans)

    def solve_transpose(self, b):
        return self.solve(b, trans="T")

    def residual(self, x, b):
        r = self._A @ x - b
        nb = np.linalg.norm(b)
        return np.linalg.norm(r) / (nb if nb > 0 else 1.0)


def factorize(A, symmetric=False):
    """Factorize ``A``; see :class:`Factorization`."""
    return Factorization(A, symmetric=symmetric)


def schur_complement(A, interface):
    """Dense Schur complement of ``A`` onto the ``interface`` rows/columns.

    S = A_GG - A_GI A_II^{-1} A_IG, with I the complement of ``interface``.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    interface = np.asarray(interface, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[interface] = False
    inner = np.flatnonzero(mask)
    Agg = A[interface][:, interface].toarray()
    if inner.size == 0:
        return 0.5 * (Agg + Agg.T)
    Aii = A[inner][:, inner]
    Aig = A[inner][:, interface].toarray()
    Agi = A[interface][:, inner]
    X = factorize(Aii, symmetric=True).solve(Aig)
    S = Agg - Agi @ X
    return 0.5 * (S + S.T)


# ----------------------------------------------------------------------
def _kkt_residual(H, c, lo, hi, x):
    g = H @ x + c
    # projected gradient: zero iff KKT holds
    pg = x - np.clip(x - g, lo, hi)
    return np.linalg.norm(pg, np.inf)


def box_qp(H, c, lo, hi, x0=None, max_iter=None, tol=1e-9):
    """Minimize 0.5 x'Hx + c'x subject to lo <= x <= hi.

    Primal active-set method on a dense SPD ``H``.  Bounds may be
    infinite.  Raises ``RuntimeError`` when the iteration cap is hit.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    if n > 1000:
        raise ValueError("box_qp is meant for at most 1000 variables")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    if np.any(lo > hi):
        raise ValueError("empty box")
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, float), lo, hi)
    # working set: -1 lower, +1 upper, 0 free
    W = np.zeros(n, dtype=int)
    W[x <= lo] = -1
    W[x >= hi] = 1
    W[lo == hi] = -1
    max_iter = max_iter or 50 * (n + 10)
    scale = max(np.abs(H).max(), np.abs(c).max(), 1.0)
    for _ in range(max_iter):
        F = np.flatnonzero(W == 0)
        g = H @ x + c
        p = np.zeros(n)
        if F.size:
            p[F] = np.linalg.solve(H[np.ix_(F, F)], -g[F])
        if np.linalg.norm(p, np.inf) <= 1e-14 * (1.0 + np.linalg.norm(x, np.inf)):
            # multipliers of active bounds: g = mu_lo - mu_hi
            mult = np.where(W == -1, g, np.where(W == 1, -g, 0.0))
            mult[lo == hi] = 0.0
            j = int(np.argmin(mult))
            if mult[j] >= -1e-12 * scale:
                return x
            W[j] = 0
            continue
        # step to the first blocking bound
        alpha, block = 1.0, -1
        for i in F:
            if p[i] < 0 and np.isfinite(lo[i]):
                a = (lo[i] - x[i]) / p[i]
            elif p[i] > 0 and np.isfinite(hi[i]):
                a = (hi[i] - x[i]) / p[i]
            else:
                continue
            if a < alpha:
                alpha, block = a, i
        x = x + alpha * p
        if block >= 0:
            W[block] = -1 if p[block] < 0 else 1
            x[block] = lo[block] if p[block] < 0 else hi[block]
    raise RuntimeError("box_qp: iteration cap reached")


def box_qp_enumerate(H, c, lo, hi):
    """Brute-force box QP over all 3^n active patterns (reference for tests)."""
    H = np.asarray(H, float)
    c = np.asarray(c, float)
    n = c.size
    best, bestval = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        pat = np.array(pattern)
        x = np.where(pat == -1, lo, np.where(pat == 1, hi, 0.0)).astype(float)
        F = np.flatnonzero(pat == 0)
        if F.size:
            B = np.flatnonzero(pat != 0)
            rhs = -c[F] - H[np.ix_(F, B)] @ x[B]
            x[F] = sla.solve(H[np.ix_(F, F)], rhs, assume_a="pos")
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        val = 0.5 * x @ H @ x + c @ x
        if val < bestval:
            best, bestval = x, val
    return best


kkt_residual = _kkt_residual
