"""Model parameters, data, targets and the discrete control layout."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import assembly as asm
from .fem.spaces import SpaceSet
from .stream_density import build_eta


def _zero_vec(x, y):
    return (np.zeros_like(x), np.zeros_like(x))


def _zero(x, y):
    return np.zeros_like(x)


def _zero_s(s):
    return np.zeros_like(s)


def _zero_vec_s(s):
    return (np.zeros_like(s), np.zeros_like(s))


def _one_s(s):
    return np.ones_like(s)


@dataclass
class ModelParams:
    """Viscosities, friction, body forces, Gamma_0 data and objective weights.

    ``f(x, y) -> (fx, fy)`` and ``g(x, y)`` are body forces.  ``u0(s) -> (ux, uy)``,
    ``w0(s)`` and ``rho0(s)`` are Gamma_0 data as functions of the arc length
    from the arc origin.
    """

    mu1: float = 1.0
    mu2: float = 1.0
    mur: float = 0.0
    alpha: float = 0.0
    f: Callable = _zero_vec
    g: Callable = _zero
    u0: Callable = _zero_vec_s
    w0: Callable = _zero_s
    rho0: Callable = _one_s
    beta: tuple = (0.0, 1.0, 0.0, 0.0, 1.0, 1.0)

    def validate(self):
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if self.mur < 0 or self.alpha < 0:
            raise ValueError("mur and alpha must be nonnegative")
        b = np.asarray(self.beta, dtype=float)
        if b.shape != (6,) or np.any(b < 0):
            raise ValueError("beta must be six nonnegative weights")
        if not np.any(b > 0):
            raise ValueError("objective weights beta are all zero")
        return self


@dataclass
class Targets:
    """Desired velocity, microrotation and density as quadrature-point arrays."""

    ud: np.ndarray
    wd: np.ndarray
    rhod: np.ndarray

    @classmethod
    def from_functions(cls, S, ud=_zero_vec, wd=_zero, rhod=_zero):
        x, y = S.xq[..., 0], S.xq[..., 1]
        u = ud(x, y)
        return cls(np.stack([np.broadcast_to(u[0], x.shape), np.broadcast_to(u[1], x.shape)], -1).astype(float),
                   np.broadcast_to(wd(x, y), x.shape).astype(float),
                   np.broadcast_to(rhod(x, y), x.shape).astype(float))

    @classmethod
    def from_state(cls, S, state):
        u = np.stack([S.values(state.u[:S.n2]), S.values(state.u[S.n2:])], -1)
        return cls(u, S.values(state.w), np.array(state.rho, dtype=float))


@dataclass
class ControlPair:
    """Control coefficients: ``g1`` (x components then y components on the
    interior Gamma_1 nodes) and ``g2`` (interior Gamma_3 nodes)."""

    g1: np.ndarray
    g2: np.ndarray

    def copy(self):
        return ControlPair(self.g1.copy(), self.g2.copy())

    @property
    def vector(self):
        return np.concatenate([self.g1, self.g2])


@dataclass
class ControlSet:
    """Box bounds per DOF and the Gamma_1 flux equality ``a1 @ g1 = flux_target``."""

    lo1: np.ndarray
    hi1: np.ndarray
    lo2: np.ndarray
    hi2: np.ndarray
    a1: np.ndarray
    flux_target: float

    def contains(self, c, tol=1e-10):
        scale = 1.0 + np.abs(self.a1).sum() * max(np.abs(c.g1).max(initial=0.0), 1.0)
        return (np.all(c.g1 >= self.lo1 - tol) and np.all(c.g1 <= self.hi1 + tol)
                and np.all(c.g2 >= self.lo2 - tol) and np.all(c.g2 <= self.hi2 + tol)
                and abs(self.a1 @ c.g1 - self.flux_target) <= tol * scale)


class Problem:
    """Discrete problem: spaces, constant operators, data and controls.

    Parameters
    ----------
    mesh : Mesh
    params : ModelParams
    targets : Targets or None
        Defaults to zero targets.
    g1_bounds, g2_bounds : pair of float or arrays
        Box bounds of the controls.
    """

    def __init__(self, mesh, params, targets=None, g1_bounds=(-np.inf, np.inf),
                 g2_bounds=(-np.inf, np.inf), spaces=None):
        self.mesh = mesh
        self.params = params.validate()
        S = self.S = spaces if spaces is not None else SpaceSet(mesh)
        n2 = S.n2
        self.targets = targets if targets is not None else Targets.from_functions(S)

        self.A = asm.assemble_A(S, params.alpha)
        self.K = asm.assemble_stiffness(S)
        self.M = asm.assemble_mass(S)
        self.Mv = asm.blockdiag(self.M)
        self.D = asm.assemble_divergence(S)
        self.R, self.Rt = asm.assemble_rot_coupling(S)
        self.RR = asm.assemble_rotrot(S)
        self.H1 = (self.K + self.M).tocsr()
        self.H1v = asm.blockdiag(self.H1)

        x, y = S.xq[..., 0], S.xq[..., 1]
        fx, fy = params.f(x, y)
        self.fq = (np.broadcast_to(fx, x.shape).astype(float), np.broadcast_to(fy, x.shape).astype(float))
        self.gq = np.broadcast_to(params.g(x, y), x.shape).astype(float)

        # Dirichlet data from Gamma_0
        s = S.node_arclength()
        g0 = S.gamma0_nodes
        self.UD0 = np.zeros(2 * n2)
        ux, uy = params.u0(s[g0])
        self.UD0[g0] = ux
        self.UD0[g0 + n2] = uy
        self.WD0 = np.zeros(n2)
        self.WD0[g0] = params.w0(s[g0])

        # controls
        self.i1 = np.concatenate([S.gamma1_nodes, S.gamma1_nodes + n2])
        self.i3 = S.gamma3_nodes
        self.n_g1, self.n_g2 = len(self.i1), len(self.i3)
        flux_all = S.flux_row()
        self.flux_all = flux_all
        a1 = flux_all[self.i1]
        lo1, hi1 = (np.broadcast_to(np.asarray(b, float), (self.n_g1,)).copy() for b in g1_bounds)
        lo2, hi2 = (np.broadcast_to(np.asarray(b, float), (self.n_g2,)).copy() for b in g2_bounds)
        self.controls = ControlSet(lo1, hi1, lo2, hi2, a1, float(-flux_all @ self.UD0))

        # density profile from the Gamma_0 stream values
        arc_nodes, arc_s = S.gamma0_arc_nodes
        psi0 = (S.stream_trace @ self.UD0)[arc_nodes]
        self.gamma0_psi = psi0
        self.gamma0_rho = np.broadcast_to(params.rho0(arc_s), arc_s.shape).astype(float)
        self.profile = build_eta(psi0, self.gamma0_rho)

    # ------------------------------------------------------------------
    def zero_controls(self):
        return ControlPair(np.zeros(self.n_g1), np.zeros(self.n_g2))

    def velocity_data(self, controls):
        U = self.UD0.astype(np.result_type(controls.g1, float)).copy()
        U[self.i1] = controls.g1
        return U

    def rotation_data(self, controls):
        W = self.WD0.astype(np.result_type(controls.g2, float)).copy()
        W[self.i3] = controls.g2
        return W

    def flux_imbalance(self, controls):
        return float(np.real(self.flux_all @ self.velocity_data(controls)))

    @property
    def beta(self):
        return np.asarray(self.params.beta, dtype=float)

    def with_targets(self, targets):
        """Same problem with different targets (operators are shared)."""
        new = object.__new__(Problem)
        new.__dict__.update(self.__dict__)
        new.targets = targets
        return new

    def with_params(self, **changes):
        from dataclasses import replace
        return Problem(self.mesh, replace(self.params, **changes), self.targets,
                       (self.controls.lo1, self.controls.hi1), (self.controls.lo2, self.controls.hi2),
                       spaces=self.S)
