# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled element kernels (real double precision)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def contract(const double[:, :, ::1] left, const double[:, :, ::1] right,
             const double[:, ::1] dx):
    cdef Py_ssize_t ne = left.shape[0], ni = left.shape[1], nq = left.shape[2]
    cdef Py_ssize_t nj = right.shape[1]
    cdef Py_ssize_t e, i, j, q
    cdef double s, lw
    out = np.zeros((ne, ni, nj))
    cdef double[:, :, ::1] K = out
    cdef double[::1] tmp = np.empty(nq)
    with nogil:
        for e in range(ne):
            for i in range(ni):
                for q in range(nq):
                    tmp[q] = left[e, i, q] * dx[e, q]
                for j in range(nj):
                    s = 0.0
                    for q in range(nq):
                        s = s + tmp[q] * right[e, j, q]
                    K[e, i, j] = s
    return out


def gather(const double[::1] coef, const long[:, ::1] dofs,
           const double[:, :, ::1] table):
    cdef Py_ssize_t ne = dofs.shape[0], nk = dofs.shape[1], nq = table.shape[2]
    cdef Py_ssize_t e, k, q
    cdef double c
    out = np.zeros((ne, nq))
    cdef double[:, ::1] v = out
    with nogil:
        for e in range(ne):
            for k in range(nk):
                c = coef[dofs[e, k]]
                for q in range(nq):
                    v[e, q] = v[e, q] + c * table[e, k, q]
    return out


def integrate(const double[:, :, ::1] left, const double[:, ::1] weight,
              const double[:, ::1] dx):
    cdef Py_ssize_t ne = left.shape[0], ni = left.shape[1], nq = left.shape[2]
    cdef Py_ssize_t e, i, q
    cdef double s
    out = np.zeros((ne, ni))
    cdef double[:, ::1] b = out
    with nogil:
        for e in range(ne):
            for i in range(ni):
                s = 0.0
                for q in range(nq):
                    s = s + left[e, i, q] * weight[e, q] * dx[e, q]
                b[e, i] = s
    return out
