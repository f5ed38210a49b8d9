"""Stationary state solver: lifting, linear subproblems and Picard iteration.

Unknowns are full coefficient vectors: velocity ``U`` (blocked, length
2 n2), pressure ``P`` (n1), microrotation ``W`` (n2) and stream function
``psi`` (n2).  Velocity test functions are ``Pu y`` (interior nodes, and
tangential components on Gamma_2); the normal component on Gamma_2 and both
components on Gamma \\ Gamma_2 are prescribed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import assembly as asm
from .linalg import factorize
from .stream_density import (FluxImbalanceError, evaluate_density, psi_boundary_values,
                             solve_stream, stream_residual)


class ViscosityWarning(UserWarning):
    """The sufficient viscosity condition for existence is not met."""


@dataclass
class StateSolution:
    u: np.ndarray
    p: np.ndarray
    w: np.ndarray
    psi: np.ndarray
    rho: np.ndarray
    deta: np.ndarray
    converged: bool
    picard_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    theta_bound: float = 0.0
    energy_ratio: float = 0.0
    controls: object = None
    u_lift: np.ndarray = None
    w_lift: np.ndarray = None

    @property
    def iterations(self):
        return len(self.picard_history)


# ----------------------------------------------------------------------
# norms
def h1_norm(prob, U):
    H = prob.H1v if len(U) == 2 * prob.S.n2 else prob.H1
    return float(np.sqrt(max(np.real(U @ (H @ U)), 0.0)))


def l2_quad(S, *fields):
    return float(np.sqrt(sum(np.sum(S.dx * np.abs(f) ** 2) for f in fields)))


# ----------------------------------------------------------------------
# lifts
def _check_flux(prob, controls, rtol=1e-10):
    U = prob.velocity_data(controls)
    net = prob.flux_imbalance(controls)
    scale = np.abs(prob.flux_all) @ np.abs(U)
    if abs(net) > rtol * max(scale, 1e-300) and abs(net) > 1e-14:
        raise FluxImbalanceError(net)
    return U


def lift_velocity(prob, controls):
    """Divergence-free extension of the Gamma \\ Gamma_2 data, zero on Gamma_2.

    Solves a Stokes problem with the velocity prescribed on the whole boundary.
    """
    S = prob.S
    UD = _check_flux(prob, controls)
    inner = S.interior_nodes
    free = np.concatenate([inner, inner + S.n2])
    return _stokes_dirichlet(prob, UD, free)


def _stokes_dirichlet(prob, UD, free):
    S = prob.S
    key = ("stokes_lift", len(free))
    def build():
        A = prob.A.tocsr()[free][:, free]
        Df = prob.D.tocsr()[S.p_free][:, free]
        K = sp.bmat([[A, -Df.T], [-Df, None]], format="csc")
        return factorize(K)
    lu = S.cached(key, build)
    A = prob.A.tocsr()
    Df = prob.D.tocsr()[S.p_free]
    rhs = np.concatenate([-(A @ UD)[free], Df @ UD])
    x = lu.solve(rhs)
    U = UD.copy()
    U[free] = x[:len(free)]
    return U


def lift_rotation(prob, controls):
    """Discrete harmonic extension of the rotation boundary data."""
    S = prob.S
    WD = prob.rotation_data(controls)
    inner, bn = S.interior_nodes, S.boundary_nodes
    K = prob.K.tocsr()
    lu = S.cached("harmonic", lambda: factorize(K[inner][:, inner], symmetric=True))
    W = WD.copy()
    W[inner] = lu.solve(-(K[inner][:, bn] @ WD[bn]))
    return W


# ----------------------------------------------------------------------
# linear subproblems
def rotation_operator(prob, rho, a):
    p = prob.params
    return (p.mu2 * prob.K + asm.assemble_Btilde(prob.S, rho, a) + 4.0 * p.mur * prob.M).tocsr()


def solve_w_linear(prob, rho, a, u_total, w_lift):
    """Homogeneous microrotation correction for frozen density and transport.

    Returns ``w_hat`` (zero on the boundary) such that ``w_hat + w_lift``
    satisfies the rotation equation tested with interior functions.
    """
    S = prob.S
    p = prob.params
    L = rotation_operator(prob, rho, a)
    rhs = 2.0 * p.mur * (prob.Rt @ u_total) + asm.assemble_load(S, prob.gq, rho) - L @ w_lift
    inner = S.interior_nodes
    w = np.zeros(S.n2, dtype=rhs.dtype)
    Lii = L[inner][:, inner]
    w[inner] = factorize(Lii).solve(rhs[inner])
    return w


def solve_oseen(prob, rho, a, W, UD):
    """Velocity and pressure with transport frozen at ``a`` and given microrotation."""
    S = prob.S
    p = prob.params
    L = (p.mu1 * prob.A + asm.assemble_B(S, rho, a)).tocsr()
    Pu = S.Pu
    Df = prob.D.tocsr()[S.p_free]
    Lf = (Pu.T @ L @ Pu).tocsr()
    Bf = (Df @ Pu).tocsr()
    K = sp.bmat([[Lf, -Bf.T], [-Bf, None]], format="csc")
    load = asm.assemble_vector_load(S, prob.fq[0], prob.fq[1], rho)
    rhs = np.concatenate([Pu.T @ (load + 2.0 * p.mur * (prob.R @ W) - L @ UD), Df @ UD])
    x = factorize(K).solve(rhs)
    nu = S.nu_free
    U = UD + Pu @ x[:nu]
    P = np.zeros(S.n1)
    P[S.p_free] = x[nu:]
    return U, P


def pressure_mean_zero(prob, P):
    S = prob.S
    w = S.cached("p1_mass_row", lambda: np.bincount(
        S.mesh.triangles.ravel(), weights=np.repeat(S.area / 3.0, 3), minlength=S.n1))
    return P - (w @ P) / w.sum()


# ----------------------------------------------------------------------
def picard_step(prob, lifts, u_tilde, profile=None):
    """One application of the fixed-point map.

    Returns ``(u_hat, w_hat, psi, rho)`` where the velocity and
    microrotation are homogeneous parts (total minus lift).
    """
    u_lift, w_lift, UD, controls = lifts
    profile = profile or prob.profile
    a = u_tilde + u_lift
    psi = solve_stream(prob.S, a, psi_boundary_values(prob.S, a))
    rho, _ = evaluate_density(profile, prob.S, psi)
    w_hat = solve_w_linear(prob, rho, a, a, w_lift)
    U, _ = solve_oseen(prob, rho, a, w_hat + w_lift, UD)
    return U - u_lift, w_hat, psi, rho


def _poincare_constant(prob):
    S = prob.S
    def build():
        inner = S.interior_nodes
        K = prob.K.tocsr()[inner][:, inner]
        M = prob.M.tocsr()[inner][:, inner]
        if len(inner) < 50:
            import scipy.linalg as sla
            lam = sla.eigh(K.toarray(), M.toarray(), eigvals_only=True)[0]
        else:
            lam = spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="LM",
                             return_eigenvectors=False)[0]
        return float(1.0 / np.sqrt(lam))
    return S.cached("poincare", build)


def viscosity_margin(prob, controls):
    """Margin of the sufficient existence condition with empirical constants.

    Returns ``min(2 mu1 - C_eta C |w_g2| - mur C, mu2 - mur C)`` with C a
    Poincare-type constant of the mesh and C_eta the largest density.
    """
    from .objective import halfnorm_segment
    p = prob.params
    C = _poincare_constant(prob)
    Ceta = prob.profile.max_value
    wg = halfnorm_segment(prob, "boundary").norm(prob.rotation_data(controls)[prob.S.boundary_nodes])
    return min(2.0 * p.mu1 - Ceta * C * wg - p.mur * C, p.mu2 - p.mur * C)


def theta_bound(prob, controls):
    """Data aggregate bounding the state norm."""
    from .objective import halfnorm_segment
    S = prob.S
    ug = halfnorm_segment(prob, "open").norm_vector(prob.velocity_data(controls))
    wg = halfnorm_segment(prob, "boundary").norm(prob.rotation_data(controls)[S.boundary_nodes])
    fn = l2_quad(S, *prob.fq)
    gn = l2_quad(S, prob.gq)
    return ug * wg + ug + wg + ug ** 2 + fn + gn


def solve_state(prob, controls=None, tol=1e-9, max_iter=100, relaxation=1.0, profile=None,
                check_viscosity=True, initial=None):
    """Picard iteration on the homogeneous velocity.

    Stops when ``|u_{k+1} - u_k|_H1 <= tol (1 + |u_k|_H1)``.  The relaxation
    factor is halved whenever the update norm grows twice in a row.  A
    non-converged run returns ``converged=False`` with its history.
    ``initial`` is an optional total velocity used as the starting iterate
    (the lift is used otherwise).
    """
    controls = controls if controls is not None else prob.zero_controls()
    S = prob.S
    if check_viscosity:
        margin = viscosity_margin(prob, controls)
        if margin <= 0:
            warnings.warn(f"viscosity condition not met with empirical constants (margin {margin:.3g})",
                          ViscosityWarning, stacklevel=2)
    UD = prob.velocity_data(controls)
    u_lift = lift_velocity(prob, controls)
    w_lift = lift_rotation(prob, controls)
    lifts = (u_lift, w_lift, UD, controls)
    u = np.zeros_like(u_lift)
    if initial is not None:
        # keep the starting iterate in the homogeneous space
        u = S.Pu @ (S.Pu.T @ (np.asarray(initial) - u_lift))
    theta = relaxation
    history, energy = [], []
    converged = False
    grow = 0
    w_hat = np.zeros(S.n2)
    for k in range(max_iter):
        u_hat, w_hat, psi, rho = picard_step(prob, lifts, u, profile)
        step = u_hat - u
        d = h1_norm(prob, step)
        un = h1_norm(prob, u)
        if not np.isfinite(d):
            history.append(float("nan"))
            break
        history.append(d)
        if len(history) > 1 and d > history[-2]:
            grow += 1
            if grow >= 2:
                theta *= 0.5
                grow = 0
        else:
            grow = 0
        u = u + theta * step
        energy.append(_energy_residual(prob, u + u_lift, w_hat + w_lift, u_lift, profile))
        if d <= tol * (1.0 + un):
            converged = True
            break
    U = u + u_lift
    psi = solve_stream(S, U, psi_boundary_values(S, U)) if np.all(np.isfinite(U)) else np.full(S.n2, np.nan)
    rho, deta = evaluate_density(profile or prob.profile, S, psi)
    # microrotation and pressure consistent with the final velocity
    if np.all(np.isfinite(U)):
        W = solve_w_linear(prob, rho, U, U, w_lift) + w_lift
        _, P = solve_oseen(prob, rho, U, W, UD)
        P = pressure_mean_zero(prob, P)
    else:
        W, P = np.full(S.n2, np.nan), np.full(S.n1, np.nan)
    th = theta_bound(prob, controls)
    nrm = h1_norm(prob, U) + h1_norm(prob, W)
    return StateSolution(U, P, W, psi, rho, deta, converged, history, energy, th,
                         nrm / th if th > 0 else 0.0, controls, u_lift, w_lift)


def _energy_residual(prob, U, W, u_lift, profile=None):
    """Momentum residual tested with the homogeneous velocity, relative to the viscous energy.

    Transport and pressure drop out of this pairing, so it measures how well
    the energy identity holds at the current iterate.
    """
    S = prob.S
    if not np.all(np.isfinite(U)):
        return float("nan")
    psi = solve_stream(S, U, psi_boundary_values(S, U, rtol=1e-6))
    rho, _ = evaluate_density(profile or prob.profile, S, psi)
    F = momentum_residual(prob, U, np.zeros(S.n1), W, rho)
    uh = U - u_lift
    visc = abs(uh @ (prob.params.mu1 * prob.A @ uh))
    return float(abs(uh @ F) / max(visc, 1e-300))


# ----------------------------------------------------------------------
# nonlinear residual and its Jacobian
def momentum_residual(prob, U, P, W, rho):
    S = prob.S
    p = prob.params
    C = asm.assemble_B(S, rho, U, check=False)
    load = asm.assemble_vector_load(S, prob.fq[0], prob.fq[1], rho)
    return p.mu1 * (prob.A @ U) + C @ U - prob.D.T @ P - 2.0 * p.mur * (prob.R @ W) - load


def rotation_residual(prob, U, W, rho):
    S = prob.S
    p = prob.params
    C = asm.assemble_Btilde(S, rho, U, check=False)
    return (p.mu2 * (prob.K @ W) + C @ W + 4.0 * p.mur * (prob.M @ W)
            - 2.0 * p.mur * (prob.Rt @ U) - asm.assemble_load(S, prob.gq, rho))


def full_residual(prob, U, P, W, psi, profile=None):
    """Residual blocks ``(F_U, F_P, F_W, F_psi)`` tested with every basis function."""
    S = prob.S
    rho = (profile or prob.profile)(S.values(psi))
    return (momentum_residual(prob, U, P, W, rho), -(prob.D @ U),
            rotation_residual(prob, U, W, rho), stream_residual(S, U, psi))


def reduced_residual(prob, U, P, W, psi, profile=None):
    """Residual restricted to the equations of the constrained system."""
    S = prob.S
    FU, FP, FW, Fpsi = full_residual(prob, U, P, W, psi, profile)
    return np.concatenate([S.Pu.T @ FU, FP[S.p_free], FW[S.interior_nodes], Fpsi])


def state_residual_norm(prob, state):
    S = prob.S
    r = reduced_residual(prob, state.u, state.p, state.w, state.psi)
    b = np.concatenate([S.Pu.T @ asm.assemble_vector_load(S, prob.fq[0], prob.fq[1], state.rho),
                        np.zeros(S.n1 - 1), np.zeros(len(S.interior_nodes)), np.zeros(S.n2)])
    scale = (np.linalg.norm(b) + prob.params.mu1 * np.linalg.norm(S.Pu.T @ (prob.A @ state.u))
             + np.linalg.norm(prob.K @ state.psi) + 1e-300)
    return float(np.linalg.norm(r) / scale)


def jacobian_blocks(prob, U, W, psi, profile=None):
    """Sparse Jacobian blocks of the full residual at ``(U, W, psi)``.

    Returns a dict keyed by ``(equation, unknown)`` with equations and
    unknowns among ``"U", "P", "W", "psi"``.
    """
    S = prob.S
    p = prob.params
    profile = profile or prob.profile
    pq = S.values(psi)
    rho, deta = profile(pq), profile.derivative(pq)
    n2 = S.n2
    C = asm.assemble_Btilde(S, rho, U, check=False)
    Nu = asm.transport_velocity_derivative(S, rho, U, 2)
    Nw = asm.transport_velocity_derivative(S, rho, W, 1)
    dxd = S.dx * deta
    tu = asm.transport_integrand(S, U, U, 2)
    left_u = [tu[0] - S.phi * prob.fq[0][:, None, :], tu[1] - S.phi * prob.fq[1][:, None, :]]
    dU_dpsi = sp.vstack([asm._form(S, l, S.phi, dx=dxd) for l in left_u], format="csr")
    tw = asm.transport_integrand(S, U, W, 1)[0] - S.phi * prob.gq[:, None, :]
    dW_dpsi = asm._form(S, tw, S.phi, dx=dxd)
    # stream equation rows: Poisson inside, trace on the boundary
    bn = S.boundary_nodes
    mask = np.ones(n2)
    mask[bn] = 0.0
    Dm = sp.diags(mask)
    Db = sp.diags(1.0 - mask)
    from .stream_density import _operators
    ops = _operators(S)
    J = {
        ("U", "U"): (p.mu1 * prob.A + asm.blockdiag(C) + Nu).tocsr(),
        ("U", "P"): (-prob.D.T).tocsr(),
        ("U", "W"): (-2.0 * p.mur * prob.R).tocsr(),
        ("U", "psi"): dU_dpsi,
        ("P", "U"): (-prob.D).tocsr(),
        ("W", "U"): (Nw - 2.0 * p.mur * prob.Rt).tocsr(),
        ("W", "W"): (p.mu2 * prob.K + C + 4.0 * p.mur * prob.M).tocsr(),
        ("W", "psi"): dW_dpsi,
        ("psi", "U"): (-(Dm @ ops["Rt"]) - Db @ S.stream_trace).tocsr(),
        ("psi", "psi"): (Dm @ ops["K"] + Db).tocsr(),
    }
    return J


def reduced_jacobian(prob, U, W, psi, profile=None):
    """Jacobian of :func:`reduced_residual` with respect to the free unknowns
    ``(x_U, P_free, W_interior, psi)`` as one sparse matrix."""
    S = prob.S
    J = jacobian_blocks(prob, U, W, psi, profile)
    Pu = S.Pu
    Ep = sp.identity(S.n1, format="csr")[:, S.p_free]
    Ew = sp.identity(S.n2, format="csr")[:, S.interior_nodes]
    col = {"U": Pu, "P": Ep, "W": Ew, "psi": sp.identity(S.n2, format="csr")}
    row = {"U": Pu.T, "P": Ep.T, "W": Ew.T, "psi": sp.identity(S.n2, format="csr")}
    order = ["U", "P", "W", "psi"]
    blocks = [[(row[r] @ J[(r, c)] @ col[c]) if (r, c) in J else None for c in order] for r in order]
    return sp.bmat(blocks, format="csc"), J
