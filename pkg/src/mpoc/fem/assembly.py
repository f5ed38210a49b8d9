"""Assembly of the bilinear and trilinear forms of the coupled system.

All element integrals use the 6-point rule of :mod:`.quadrature`.  Density
and transport fields enter as values at quadrature points, so the same
routines serve real solves and complex-step derivative checks.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .spaces import EDGE_MASS


class DensityError(ValueError):
    """Raised when a density value at a quadrature point is not positive."""


def scatter(Ke, rdofs, cdofs, shape):
    """Sum element matrices ``Ke[e]`` into a CSR matrix."""
    ne, ni, nj = Ke.shape
    rows = np.broadcast_to(rdofs[:, :, None], (ne, ni, nj)).ravel()
    cols = np.broadcast_to(cdofs[:, None, :], (ne, ni, nj)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def scatter_vector(be, dofs, n):
    return np.bincount(dofs.ravel(), weights=be.real.ravel(), minlength=n) + (
        1j * np.bincount(dofs.ravel(), weights=be.imag.ravel(), minlength=n)
        if np.iscomplexobj(be) else 0.0)


def _form(S, left, right, rdofs=None, cdofs=None, shape=None, dx=None):
    rdofs = S.cell_dofs if rdofs is None else rdofs
    cdofs = S.cell_dofs if cdofs is None else cdofs
    shape = (S.n2, S.n2) if shape is None else shape
    Ke = kernels.contract(left, right, S.dx if dx is None else dx)
    return scatter(Ke, rdofs, cdofs, shape)


def check_density(S, rho):
    r = np.real(rho)
    bad = np.argwhere(~(r > 0.0))
    if bad.size:
        e, q = bad[0]
        x, y = S.xq[e, q]
        raise DensityError(f"nonpositive density {r[e, q]:.3e} at quadrature point "
                           f"({x:.6g}, {y:.6g}) of triangle {e}")


def weighted(S, rho):
    """``dx`` multiplied by a quadrature-point weight."""
    return S.dx * rho


# ----------------------------------------------------------------------
# scalar quadratic-space forms
def assemble_mass(S, weight=None):
    """Quadratic mass matrix, optionally weighted by quadrature-point values."""
    return _form(S, S.phi, S.phi, dx=S.dx if weight is None else weighted(S, weight))


def assemble_stiffness(S):
    return _form(S, S.dphi_x, S.dphi_x) + _form(S, S.dphi_y, S.dphi_y)


def assemble_Atilde(S):
    """Gradient pairing (grad w, grad z) on the rotation space."""
    return assemble_stiffness(S)


def assemble_h1(S):
    return assemble_stiffness(S) + assemble_mass(S)


def assemble_load(S, f, weight=None):
    """Load vector ``(weight * f, phi_i)``; ``f`` holds quadrature-point values."""
    f = np.broadcast_to(f, S.dx.shape)
    if weight is not None:
        f = f * weight
    be = kernels.integrate(S.phi, np.ascontiguousarray(f), S.dx) if not np.iscomplexobj(f) \
        else np.einsum("eiq,eq,eq->ei", S.phi, f, S.dx)
    return scatter_vector(be, S.cell_dofs, S.n2)


def assemble_vector_load(S, fx, fy, weight=None):
    return np.concatenate([assemble_load(S, fx, weight), assemble_load(S, fy, weight)])


def blockdiag(A):
    return sp.block_diag([A, A], format="csr")


def assemble_vector_mass(S, weight=None):
    return blockdiag(assemble_mass(S, weight))


# ----------------------------------------------------------------------
# velocity forms
def assemble_A(S, alpha=0.0):
    """Deformation form 2(D(u), D(v)) plus the friction term 2 alpha (u, v) on Gamma_2."""
    Kxx = _form(S, S.dphi_x, S.dphi_x)
    Kyy = _form(S, S.dphi_y, S.dphi_y)
    Kyx = _form(S, S.dphi_y, S.dphi_x)  # test d/dy, trial d/dx
    A = sp.bmat([[2.0 * Kxx + Kyy, Kyx], [Kyx.T, Kxx + 2.0 * Kyy]], format="csr")
    if alpha:
        A = A + 2.0 * alpha * blockdiag(boundary_mass(S, vtag="G2"))
    return A.tocsr()


def boundary_mass(S, vtag=None, rtag=None):
    """Quadratic edge mass matrix over the tagged boundary edges."""
    edges = S.mesh.edges_with(vtag, rtag)
    if not len(edges):
        return sp.csr_matrix((S.n2, S.n2))
    Ke = S.bedge_len[edges, None, None] * EDGE_MASS[None]
    d = S.bedge_nodes[edges]
    return scatter(Ke, d, d, (S.n2, S.n2))


def assemble_divergence(S):
    """``D[i, :] @ U = (q_i, div u)`` with linear pressure tests."""
    t = S.mesh.triangles
    shape = (S.n1, S.n2)
    Dx = _form(S, S.lam, S.dphi_x, rdofs=t, shape=shape)
    Dy = _form(S, S.lam, S.dphi_y, rdofs=t, shape=shape)
    return sp.hstack([Dx, Dy], format="csr")


def assemble_rot_coupling(S):
    """Rotation coupling matrices.

    Returns ``(R, Rt)`` with ``v @ R @ w = (rot w, v)`` where
    rot w = (dw/dy, -dw/dx), and ``z @ Rt @ u = (rot u, z)`` where
    rot u = du2/dx - du1/dy.
    """
    My = _form(S, S.phi, S.dphi_y)  # (phi_i, d phi_j / dy)
    Mx = _form(S, S.phi, S.dphi_x)
    R = sp.vstack([My, -Mx], format="csr")
    Rt = sp.hstack([-My, Mx], format="csr")
    return R, Rt


def assemble_rotrot(S):
    """Pairing (rot u, rot v) on the velocity space."""
    Kxx = _form(S, S.dphi_x, S.dphi_x)
    Kyy = _form(S, S.dphi_y, S.dphi_y)
    Kyx = _form(S, S.dphi_y, S.dphi_x)
    return sp.bmat([[Kyy, -Kyx], [-Kyx.T, Kxx]], format="csr")


# ----------------------------------------------------------------------
# transport
def transport_matrix(S, rho, a):
    """Unskewed transport ``X[i, j] = (rho a.grad phi_j, phi_i)``.

    ``a`` is the transport velocity as a full coefficient vector.
    """
    a1, a2 = S.values(a[:S.n2]), S.values(a[S.n2:])
    adv = a1[:, None, :] * S.dphi_x + a2[:, None, :] * S.dphi_y
    return _form(S, S.phi, adv, dx=weighted(S, rho))


def assemble_Btilde(S, rho, a, check=True):
    """Skew transport on the scalar space: ``z @ C @ w = c(a; w, z)`` with
    c(a; w, z) = 1/2 [(rho a.grad w, z) - (rho a.grad z, w)]."""
    if check:
        check_density(S, rho)
    X = transport_matrix(S, rho, a)
    return (0.5 * (X - X.T)).tocsr()


def assemble_B(S, rho, a, check=True):
    """Skew transport on the velocity space, componentwise."""
    return blockdiag(assemble_Btilde(S, rho, a, check))


def transport_velocity_derivative(S, rho, field, ncomp):
    """Derivative of the skew transport of ``field`` with respect to the transport velocity.

    Returns the matrix ``N`` with ``N @ da`` the change of ``C(a) @ field``
    along ``da``.  ``field`` is scalar (``ncomp=1``) or a blocked vector
    (``ncomp=2``).
    """
    n2 = S.n2
    wdx = weighted(S, rho)
    comps = [field] if ncomp == 1 else [field[:n2], field[n2:]]
    rows = []
    for c in comps:
        val = S.values(c)
        g = S.grads(c)
        blocks = []
        for m, dphi_m in enumerate((S.dphi_x, S.dphi_y)):
            # 1/2 (phi_j d_m c, phi_i) - 1/2 (phi_j c, d_m phi_i)
            left = 0.5 * (S.phi * g[:, None, :, m] - dphi_m * val[:, None, :])
            blocks.append(_form(S, left, S.phi, dx=wdx))
        rows.append(blocks)
    return sp.bmat(rows, format="csr")


def transport_integrand(S, a, field, ncomp):
    """Per-test-function integrand of the skew transport, shape (nt, ncomp*6, Q) per component.

    Returns a list (one entry per component) of arrays ``left[e, i, q]`` such
    that the transport residual row i equals ``sum_q left * rho * dx``.
    """
    n2 = S.n2
    a1, a2 = S.values(a[:n2]), S.values(a[n2:])
    comps = [field] if ncomp == 1 else [field[:n2], field[n2:]]
    out = []
    for c in comps:
        val = S.values(c)
        g = S.grads(c)
        adv_c = a1 * g[..., 0] + a2 * g[..., 1]
        adv_phi = a1[:, None, :] * S.dphi_x + a2[:, None, :] * S.dphi_y
        out.append(0.5 * (S.phi * adv_c[:, None, :] - adv_phi * val[:, None, :]))
    return out
