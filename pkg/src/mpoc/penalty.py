"""Penalized control problem around a reference optimum.

The state equations and the boundary conditions are relaxed into
penalty terms weighted by ``1/eps`` and measured in dual norms; the
divergence constraint, the Gamma_2 impermeability and the flux equality
stay exact.  Everything here is dense and meant for coarse meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import least_squares

from .objective import control_metrics, halfnorm_segment, objective_gradients, objective_value
from .problem import ControlPair
from .state import jacobian_blocks, momentum_residual, rotation_residual
from .stream_density import solve_stream


def _eval_matrix(S, table):
    """Sparse map from quadratic coefficients to values at all quadrature points."""
    nt, nb, nq = table.shape
    rows = np.broadcast_to((np.arange(nt)[:, None] * nq + np.arange(nq)[None, :])[:, None, :],
                           (nt, nb, nq))
    cols = np.broadcast_to(S.cell_dofs[:, :, None], (nt, nb, nq))
    return sp.csr_matrix((table.ravel(), (rows.ravel(), cols.ravel())), shape=(nt * nq, S.n2))


@dataclass
class Candidate:
    """Point ``(U, W, g1, g2)`` of the penalized problem (full coefficient vectors)."""

    u: np.ndarray
    w: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    @property
    def controls(self):
        return ControlPair(self.g1, self.g2)

    def vector(self):
        return np.concatenate([self.u, self.w, self.g1, self.g2])


@dataclass
class Multipliers:
    lam: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    theta: np.ndarray

    def as_tuple(self):
        return self.lam, self.phi, self.xi, self.theta


class PenaltyProblem:
    """Dense operators of the penalized functional.

    Parameters
    ----------
    prob : Problem
    anchor : Candidate
        Reference optimum; its state must solve the discrete equations.
    """

    def __init__(self, prob, anchor):
        self.prob = prob
        self.anchor = anchor
        S = self.S = prob.S
        n2 = S.n2
        self.nU, self.nW, self.n1c, self.n2c = 2 * n2, n2, prob.n_g1, prob.n_g2
        self.nz = self.nU + self.nW + self.n1c + self.n2c

        # divergence-free homogeneous velocities and the Riesz map of A
        Bf = (prob.D @ S.Pu).toarray()
        self.Z = S.Pu @ sla.null_space(Bf)  # full-vector basis
        self.AZ = self.Z.T @ (prob.A @ self.Z)
        self.AZ_chol = sla.cho_factor(self.AZ)
        inner = S.interior_nodes
        self.inner = inner
        self.Kii_chol = sla.cho_factor(prob.K.tocsr()[inner][:, inner].toarray())

        self.S1, self.S3 = control_metrics(prob)
        self.So = halfnorm_segment(prob, "open").S
        self.Sb = halfnorm_segment(prob, "boundary").S
        self.open = np.concatenate([S.open_u, S.open_u + n2])

        # exact linear constraints: C z = d
        corner = np.setdiff1d(S.dirichlet_u, S.open_u)
        ns = len(S.slip_nodes)
        Nrm = np.zeros((ns, self.nz))
        Nrm[np.arange(ns), S.slip_nodes] = S.slip_normal[:, 0]
        Nrm[np.arange(ns), S.slip_nodes + n2] = S.slip_normal[:, 1]
        Cor = np.zeros((2 * len(corner), self.nz))
        cidx = np.concatenate([corner, corner + n2])
        Cor[np.arange(len(cidx)), cidx] = 1.0
        Dv = np.zeros((S.n1, self.nz))
        Dv[:, :self.nU] = prob.D.toarray()
        Fl = np.zeros((1, self.nz))
        Fl[0, self.nU + self.nW:self.nU + self.nW + self.n1c] = prob.controls.a1
        self.C = np.vstack([Dv, Nrm, Cor, Fl])
        self.d = np.concatenate([np.zeros(S.n1 + ns), anchor.u[cidx], [prob.controls.flux_target]])
        self.N = sla.null_space(self.C)

        # quadrature evaluation and whitening factors
        self.Vq = _eval_matrix(S, S.phi)
        Gx = _eval_matrix(S, S.dphi_x)
        Gy = _eval_matrix(S, S.dphi_y)
        self.rot = sp.hstack([-Gy, Gx], format="csr")
        self.sdx = np.sqrt(S.dx.ravel())
        self.L_H1v = np.linalg.cholesky(prob.H1v.toarray())
        self.L_H1 = np.linalg.cholesky(prob.H1.toarray())
        self.L1 = np.linalg.cholesky(self.S1)
        self.L3 = np.linalg.cholesky(self.S3)
        self.Lo = np.linalg.cholesky(self.So)
        self.Lb = np.linalg.cholesky(self.Sb)

    # ------------------------------------------------------------------
    def split(self, z):
        a, b, c = self.nU, self.nU + self.nW, self.nU + self.nW + self.n1c
        return Candidate(z[:a], z[a:b], z[b:c], z[c:])

    def stream(self, U):
        return solve_stream(self.S, U)

    def _fields(self, U, W):
        prob = self.prob
        psi = self.stream(U)
        rho = prob.profile(self.S.values(psi))
        FU = momentum_residual(prob, U, np.zeros(self.S.n1), W, rho)
        FW = rotation_residual(prob, U, W, rho)
        return psi, FU, FW

    def mismatches(self, c):
        prob = self.prob
        UD = prob.velocity_data(c.controls)
        WD = prob.rotation_data(c.controls)
        bn = self.S.boundary_nodes
        return c.u[self.open] - UD[self.open], c.w[bn] - WD[bn]

    def _pair_open(self, m):
        k = len(self.S.open_u)
        return m[:k] @ self.So @ m[:k] + m[k:] @ self.So @ m[k:]

    def _so_apply(self, m):
        k = len(self.S.open_u)
        return np.concatenate([self.So @ m[:k], self.So @ m[k:]])

    # ------------------------------------------------------------------
    def multipliers(self, c, eps):
        """Penalty multipliers at the candidate ``c``.

        ``lam`` and ``phi`` are Riesz representatives of the scaled state
        residuals; ``xi`` and ``theta`` are the scaled boundary mismatches
        mapped by the trace metrics (full nodal vectors).
        """
        if not eps > 0:
            raise ValueError("eps must be positive")
        S = self.S
        _, FU, FW = self._fields(c.u, c.w)
        lam = self.Z @ sla.cho_solve(self.AZ_chol, self.Z.T @ FU) / eps
        phi = np.zeros(S.n2)
        phi[self.inner] = sla.cho_solve(self.Kii_chol, FW[self.inner]) / eps
        mu, mw = self.mismatches(c)
        xi = np.zeros(2 * S.n2)
        xi[self.open] = self._so_apply(mu) / eps
        theta = np.zeros(S.n2)
        theta[S.boundary_nodes] = self.Sb @ mw / eps
        return Multipliers(lam, phi, xi, theta)

    def penalty_terms(self, c):
        """Unscaled squared dual norms ``(|r_U|^2, |r_W|^2, |m_u|^2, |m_w|^2)``."""
        _, FU, FW = self._fields(c.u, c.w)
        rz = self.Z.T @ FU
        ru = float(rz @ sla.cho_solve(self.AZ_chol, rz))
        rw = FW[self.inner]
        rw = float(rw @ sla.cho_solve(self.Kii_chol, rw))
        mu, mw = self.mismatches(c)
        return ru, rw, float(self._pair_open(mu)), float(mw @ self.Sb @ mw)

    def J(self, c):
        psi = self.stream(c.u)
        return float(np.real(objective_value(self.prob, c.u, c.w, psi, c.controls)))

    def proximity(self, c):
        a = self.anchor
        du, dw, d1, d2 = c.u - a.u, c.w - a.w, c.g1 - a.g1, c.g2 - a.g2
        return 0.5 * float(du @ (self.prob.H1v @ du) + dw @ (self.prob.H1 @ dw)
                           + d1 @ self.S1 @ d1 + d2 @ self.S3 @ d2)

    def J_eps(self, c, eps):
        if not eps > 0:
            raise ValueError("eps must be positive")
        return self.J(c) + self.proximity(c) + 0.5 * sum(self.penalty_terms(c)) / eps

    def penalty_part(self, c, eps):
        return 0.5 * sum(self.penalty_terms(c)) / eps

    # ------------------------------------------------------------------
    def _state_derivatives(self, c):
        """Total derivatives of ``(F_U, F_W)`` in ``(U, W)`` with the stream eliminated."""
        prob = self.prob
        psi = self.stream(c.u)
        Jb = jacobian_blocks(prob, c.u, c.w, psi)
        dpsi = -np.linalg.solve(Jb["psi", "psi"].toarray(), Jb["psi", "U"].toarray())
        FU_U = Jb["U", "U"].toarray() + Jb["U", "psi"] @ dpsi
        FW_U = Jb["W", "U"].toarray() + Jb["W", "psi"] @ dpsi
        return psi, dpsi, FU_U, Jb["U", "W"].toarray(), FW_U, Jb["W", "W"].toarray()

    def gradient(self, c, eps):
        """Gradient of ``J_eps`` in ``(U, W, g1, g2)`` assembled from the multipliers."""
        prob = self.prob
        a = self.anchor
        m = self.multipliers(c, eps)
        psi, dpsi, FU_U, FU_W, FW_U, FW_W = self._state_derivatives(c)
        dU, dW, dpsi_J = objective_gradients(prob, c.u, c.w, psi)
        gU = dU + dpsi.T @ dpsi_J + prob.H1v @ (c.u - a.u) + FU_U.T @ m.lam + FW_U.T @ m.phi + m.xi
        gW = dW + prob.H1 @ (c.w - a.w) + FU_W.T @ m.lam + FW_W.T @ m.phi + m.theta
        b = prob.beta
        g1 = b[4] * self.S1 @ c.g1 + self.S1 @ (c.g1 - a.g1) - m.xi[prob.i1]
        g2 = b[5] * self.S3 @ c.g2 + self.S3 @ (c.g2 - a.g2) - m.theta[prob.i3]
        return np.concatenate([gU, gW, g1, g2])

    # ------------------------------------------------------------------
    # least-squares form: J_eps = |F(z)|^2 / 2
    def residual(self, z, eps):
        c = self.split(z)
        prob = self.prob
        b = prob.beta
        t = prob.targets
        S = self.S
        n2 = S.n2
        psi, FU, FW = self._fields(c.u, c.w)
        pq = self.Vq @ psi
        rz = self.Z.T @ FU
        mu, mw = self.mismatches(c)
        k = len(S.open_u)
        a = self.anchor
        se = 1.0 / np.sqrt(eps)
        return np.concatenate([
            np.sqrt(b[0]) * self.sdx * (self.rot @ c.u),
            np.sqrt(b[1]) * self.sdx * (self.Vq @ c.u[:n2] - t.ud[..., 0].ravel()),
            np.sqrt(b[1]) * self.sdx * (self.Vq @ c.u[n2:] - t.ud[..., 1].ravel()),
            np.sqrt(b[2]) * self.sdx * (self.Vq @ c.w - t.wd.ravel()),
            np.sqrt(b[3]) * self.sdx * (prob.profile(pq) - t.rhod.ravel()),
            np.sqrt(b[4]) * (self.L1.T @ c.g1),
            np.sqrt(b[5]) * (self.L3.T @ c.g2),
            self.L_H1v.T @ (c.u - a.u),
            self.L_H1.T @ (c.w - a.w),
            self.L1.T @ (c.g1 - a.g1),
            self.L3.T @ (c.g2 - a.g2),
            se * sla.solve_triangular(self.AZ_chol[0], rz, trans="T", lower=self.AZ_chol[1]),
            se * sla.solve_triangular(self.Kii_chol[0], FW[self.inner], trans="T", lower=self.Kii_chol[1]),
            se * (self.Lo.T @ mu[:k]),
            se * (self.Lo.T @ mu[k:]),
            se * (self.Lb.T @ mw),
        ])

    def residual_jacobian(self, z, eps):
        c = self.split(z)
        prob = self.prob
        b = prob.beta
        S = self.S
        n2 = S.n2
        nU, nW, n1c, n2c = self.nU, self.nW, self.n1c, self.n2c
        psi, dpsi, FU_U, FU_W, FW_U, FW_W = self._state_derivatives(c)
        pq = self.Vq @ psi
        Vq = self.Vq.toarray()
        k = len(S.open_u)
        se = 1.0 / np.sqrt(eps)

        def row(U=None, W=None, G1=None, G2=None, m=None):
            m = m if m is not None else next(x.shape[0] for x in (U, W, G1, G2) if x is not None)
            out = np.zeros((m, self.nz))
            if U is not None:
                out[:, :nU] = U
            if W is not None:
                out[:, nU:nU + nW] = W
            if G1 is not None:
                out[:, nU + nW:nU + nW + n1c] = G1
            if G2 is not None:
                out[:, nU + nW + n1c:] = G2
            return out

        Z0 = np.zeros_like(Vq)
        sdx = self.sdx[:, None]
        tri_AZ = lambda M: sla.solve_triangular(self.AZ_chol[0], M, trans="T", lower=self.AZ_chol[1])
        tri_K = lambda M: sla.solve_triangular(self.Kii_chol[0], M, trans="T", lower=self.Kii_chol[1])
        # trace selections
        E_open = np.zeros((2 * k, nU))
        E_open[np.arange(2 * k), self.open] = 1.0
        D_open_g1 = np.zeros((2 * k, n1c))
        pos = {node: i for i, node in enumerate(self.open)}
        for j, node in enumerate(prob.i1):
            D_open_g1[pos[node], j] = -1.0
        bn = S.boundary_nodes
        E_b = np.zeros((len(bn), nW))
        E_b[np.arange(len(bn)), bn] = 1.0
        D_b_g2 = np.zeros((len(bn), n2c))
        bpos = {node: i for i, node in enumerate(bn)}
        for j, node in enumerate(prob.i3):
            D_b_g2[bpos[node], j] = -1.0
        LoT = sla.block_diag(self.Lo.T, self.Lo.T)
        blocks = [
            row(U=np.sqrt(b[0]) * sdx * self.rot.toarray()),
            row(U=np.sqrt(b[1]) * sdx * np.hstack([Vq, Z0])),
            row(U=np.sqrt(b[1]) * sdx * np.hstack([Z0, Vq])),
            row(W=np.sqrt(b[2]) * sdx * Vq),
            row(U=np.sqrt(b[3]) * sdx * (prob.profile.derivative(pq)[:, None] * (Vq @ dpsi))),
            row(G1=np.sqrt(b[4]) * self.L1.T),
            row(G2=np.sqrt(b[5]) * self.L3.T),
            row(U=self.L_H1v.T),
            row(W=self.L_H1.T),
            row(G1=self.L1.T),
            row(G2=self.L3.T),
            row(U=se * tri_AZ(self.Z.T @ FU_U), W=se * tri_AZ(self.Z.T @ FU_W)),
            row(U=se * tri_K(FW_U[self.inner]), W=se * tri_K(FW_W[self.inner])),
            row(U=se * (LoT @ E_open), G1=se * (LoT @ D_open_g1)),
            row(W=se * (self.Lb.T @ E_b), G2=se * (self.Lb.T @ D_b_g2)),
        ]
        return np.vstack(blocks)

    # ------------------------------------------------------------------
    def minimize(self, eps, start=None, max_nfev=200):
        """Minimize ``J_eps`` over the constraint manifold from ``start`` (default: anchor).

        Returns the minimizer and the solver record.
        """
        z0 = (start if start is not None else self.anchor).vector()
        N = self.N

        def fun(y):
            return self.residual(z0 + N @ y, eps)

        def jac(y):
            return self.residual_jacobian(z0 + N @ y, eps) @ N

        res = least_squares(fun, np.zeros(N.shape[1]), jac=jac, method="trf", x_scale="jac",
                            ftol=1e-15, xtol=1e-15, gtol=1e-12, max_nfev=max_nfev)
        return self.split(z0 + N @ res.x), res


# ----------------------------------------------------------------------
@dataclass
class PenaltyEntry:
    eps: float
    dist_u: float
    dist_w: float
    dist_g1: float
    dist_g2: float
    J_eps: float
    J: float
    J_anchor: float
    residuals: tuple
    flagged: bool
    candidate: Candidate = field(repr=False, default=None)

    @property
    def distance(self):
        return self.dist_u + self.dist_w + self.dist_g1 + self.dist_g2

    @property
    def sandwich(self):
        return self.J <= self.J_eps <= self.J_anchor


@dataclass
class PenaltyReport:
    entries: list

    def monotone(self, slack=0.1):
        d = [e.distance for e in self.entries]
        return all(d[k + 1] <= (1.0 + slack) * d[k] for k in range(len(d) - 1))

    @property
    def sandwich(self):
        return all(e.sandwich for e in self.entries)


def anchor_from_state(state):
    c = state.controls
    return Candidate(state.u.copy(), state.w.copy(), c.g1.copy(), c.g2.copy())


def penalty_path_experiment(prob, anchor_state, eps_schedule, max_nfev=200):
    """Minimize the penalized functional for each ``eps`` and compare with the anchor.

    ``anchor_state`` is the state of the reference optimum.
    """
    eps_schedule = list(eps_schedule)
    if any(e <= 0 for e in eps_schedule) or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be positive and strictly decreasing")
    anchor = anchor_from_state(anchor_state)
    pp = PenaltyProblem(prob, anchor)
    J_anchor = pp.J(anchor)
    entries = []
    for eps in eps_schedule:
        c, res = pp.minimize(eps, max_nfev=max_nfev)
        du, dw = c.u - anchor.u, c.w - anchor.w
        d1, d2 = c.g1 - anchor.g1, c.g2 - anchor.g2
        terms = pp.penalty_terms(c)
        entries.append(PenaltyEntry(
            eps,
            float(np.sqrt(du @ (prob.H1v @ du))),
            float(np.sqrt(dw @ (prob.H1 @ dw))),
            float(np.sqrt(max(d1 @ pp.S1 @ d1, 0.0))),
            float(np.sqrt(max(d2 @ pp.S3 @ d2, 0.0))),
            pp.J_eps(c, eps), pp.J(c), J_anchor,
            tuple(float(np.sqrt(t)) for t in terms),
            bool(res.status <= 0), c))
    return PenaltyReport(entries)
