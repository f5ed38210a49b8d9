"""Stream function of a solenoidal velocity and the density it carries.

The density is constant along streamlines: rho = eta(psi), where psi solves
-lap psi = rot u with boundary values given by the line integral of u.n
from the arc origin, and eta maps the stream values on Gamma_0 to the
inflow density samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .fem.assembly import assemble_load, assemble_rot_coupling, assemble_stiffness
from .linalg import factorize


class FluxImbalanceError(ValueError):
    """Boundary data with nonzero net flux."""

    def __init__(self, imbalance):
        super().__init__(f"net boundary flux {imbalance:.6g} is not zero")
        self.imbalance = imbalance


class ProfileError(ValueError):
    pass


# ----------------------------------------------------------------------
def _operators(S):
    def build():
        K = assemble_stiffness(S).tocsr()
        _, Rt = assemble_rot_coupling(S)
        inner = S.interior_nodes
        Kii = K[inner][:, inner]
        Kib = K[inner][:, S.boundary_nodes]
        return dict(K=K, Rt=Rt.tocsr(), Kii=Kii, Kib=Kib, lu=factorize(Kii, symmetric=True))
    return S.cached("stream", build)


def psi_boundary_values(S, U, rtol=1e-10):
    """Boundary stream values (full quadratic vector, zero inside).

    Raises :class:`FluxImbalanceError` when the net flux of ``U`` exceeds
    ``rtol`` times the boundary flux scale.
    """
    U = np.asarray(U)
    psi = S.stream_trace @ U
    net = S.closure_row @ U
    bn = S.boundary_nodes
    scale = max(np.max(np.abs(U[bn]), initial=0.0), np.max(np.abs(U[bn + S.n2]), initial=0.0))
    scale *= S.mesh.boundary_length
    if abs(net) > rtol * max(scale, 1e-300) and abs(net) > 1e-14:
        raise FluxImbalanceError(float(np.real(net)))
    return psi


def solve_stream(S, U, psi_bc=None):
    """Solve -lap psi = rot u with Dirichlet data ``psi_bc`` on the boundary."""
    ops = _operators(S)
    if psi_bc is None:
        psi_bc = psi_boundary_values(S, U)
    inner, bn = S.interior_nodes, S.boundary_nodes
    psi = np.zeros(S.n2, dtype=np.result_type(U, psi_bc, float))
    psi[bn] = psi_bc[bn]
    rhs = (ops["Rt"] @ U)[inner] - ops["Kib"] @ psi[bn]
    psi[inner] = ops["lu"].solve(rhs)
    return psi


def stream_residual(S, U, psi):
    """Residual of the stream system: Poisson rows inside, trace rows on the boundary."""
    ops = _operators(S)
    r = ops["K"] @ psi - ops["Rt"] @ U
    bn = S.boundary_nodes
    r[bn] = psi[bn] - (S.stream_trace @ U)[bn]
    return r


def apply_stream_adjoint(S, q):
    """Velocity functional ``r`` with ``r @ v = (q, N0 v)``.

    ``N0 v`` is the stream function of ``v`` with zero boundary values.
    ``q`` is either quadrature-point values (nt, Q) or an assembled
    quadratic load vector.  One Poisson solve with zero boundary data gives
    z, and then ``r @ v = (z, rot v)``.
    """
    ops = _operators(S)
    q = np.asarray(q)
    b = assemble_load(S, q) if q.ndim == 2 else q
    inner = S.interior_nodes
    z = np.zeros(S.n2, dtype=b.dtype)
    z[inner] = ops["lu"].solve(b[inner])
    return ops["Rt"].T @ z


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DensityProfile:
    """C^1 monotone piecewise-cubic profile with constant extension.

    Attributes
    ----------
    knots : ndarray
        Strictly increasing stream values.
    values : ndarray
        Positive densities at the knots.
    slopes : ndarray
        Hermite slopes at the knots; zero at both ends.
    """

    knots: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    @property
    def constant(self):
        return len(self.knots) == 1

    @property
    def max_value(self):
        return float(np.max(self.values))

    def _pieces(self, y):
        t = self.knots
        yr = np.real(y)
        k = np.clip(np.searchsorted(t, yr, side="right") - 1, 0, len(t) - 2)
        h = t[k + 1] - t[k]
        s = (y - t[k]) / h
        return k, h, s, yr < t[0], yr > t[-1]

    def __call__(self, y):
        y = np.asarray(y)
        if self.constant:
            return np.full(y.shape, self.values[0], dtype=np.result_type(y, float))
        k, h, s, lo, hi = self._pieces(y)
        v, d = self.values, self.slopes
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        out = h00 * v[k] + h10 * h * d[k] + h01 * v[k + 1] + h11 * h * d[k + 1]
        out = np.where(lo, v[0], out)
        return np.where(hi, v[-1], out)

    def derivative(self, y):
        y = np.asarray(y)
        if self.constant:
            return np.zeros(y.shape, dtype=np.result_type(y, float))
        k, h, s, lo, hi = self._pieces(y)
        v, d = self.values, self.slopes
        out = (6 * s * (s - 1) * (v[k] - v[k + 1]) / h
               + (1 - s) * (1 - 3 * s) * d[k] + s * (3 * s - 2) * d[k + 1])
        return np.where(lo | hi, 0.0, out)


def constant_profile(value):
    if value <= 0:
        raise ProfileError("density must be positive")
    return DensityProfile(np.array([0.0]), np.array([float(value)]), np.array([0.0]))


def build_eta(psi_samples, rho_samples):
    """Density profile from stream values and densities sampled along Gamma_0.

    ``psi_samples`` must be strictly monotone along the arc, which holds when
    u0.n keeps one sign on Gamma_0.  A constant density needs no
    monotonicity and yields a constant profile.
    """
    psi = np.asarray(psi_samples, dtype=float)
    rho = np.asarray(rho_samples, dtype=float)
    if psi.shape != rho.shape or psi.ndim != 1:
        raise ProfileError("stream and density samples must be matching 1D arrays")
    if np.any(~(rho > 0)):
        raise ProfileError("boundary density must be positive")
    if np.ptp(rho) <= 1e-14 * rho.max():
        return constant_profile(rho[0])
    d = np.diff(psi)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ProfileError("inflow/outflow assumption violated: stream values on Γ0 are not strictly monotone")
    order = np.argsort(psi)
    t, v = psi[order], rho[order]
    if len(t) == 2:
        slopes = np.zeros(2)
    else:
        slopes = PchipInterpolator(t, v).derivative()(t)
        slopes[0] = slopes[-1] = 0.0
    return DensityProfile(t, v, slopes)


def evaluate_density(profile, S, psi):
    """Density and its profile derivative at quadrature points."""
    pq = S.values(psi)
    return profile(pq), profile.derivative(pq)
