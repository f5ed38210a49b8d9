"""NumPy reference implementation of the element kernels."""
import numpy as np


def contract(left, right, dx):
    """Element matrices ``K[e, i, j] = sum_q left[e, i, q] * right[e, j, q] * dx[e, q]``."""
    return np.einsum("eiq,ejq,eq->eij", left, right, dx, optimize=True)


def gather(coef, dofs, table):
    """Evaluate a field at element points: ``out[e, q] = sum_k coef[dofs[e, k]] * table[e, k, q]``."""
    return np.einsum("ek,ekq->eq", coef[dofs], table, optimize=True)


def integrate(left, weight, dx):
    """Element vectors ``b[e, i] = sum_q left[e, i, q] * weight[e, q] * dx[e, q]``."""
    return np.einsum("eiq,eq,eq->ei", left, weight, dx, optimize=True)
