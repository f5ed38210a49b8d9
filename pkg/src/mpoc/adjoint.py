"""Discrete adjoint of the coupled state system and boundary multipliers.

The adjoint variables solve the transposed linearization of the state
equations with the objective derivative as source.  The boundary
functionals ``xi`` (velocity, on Gamma \\ Gamma_2) and ``theta``
(microrotation, on Gamma) are the residuals of the adjoint equations
tested with the nodal basis functions whose traces do not vanish.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import SingularMatrixError, factorize
from .objective import objective_gradients
from .state import ViscosityWarning, reduced_jacobian, viscosity_margin


class AdjointSingularError(RuntimeError):
    pass


@dataclass
class AdjointSolution:
    """Adjoint state at a converged state.

    Attributes
    ----------
    lam : ndarray
        Velocity adjoint, full blocked vector (zero on prescribed components).
    pi : ndarray
        Pressure adjoint (zero at the pinned node).
    phi : ndarray
        Microrotation adjoint (zero on the boundary).
    chi : ndarray
        Stream-function adjoint.
    xi : ndarray
        Velocity boundary functional, blocked nodal vector supported on the
        Gamma \\ Gamma_2 trace nodes.
    theta : ndarray
        Microrotation boundary functional supported on the boundary nodes.
    residual : float
        Relative residual of the adjoint linear system.
    """

    lam: np.ndarray
    pi: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    theta: np.ndarray
    residual: float
    lambda0: float = 1.0


def _split(S, x):
    nu, npf, ni = S.nu_free, S.n1 - 1, len(S.interior_nodes)
    lam = S.Pu @ x[:nu]
    pi = np.zeros(S.n1, dtype=x.dtype)
    pi[S.p_free] = x[nu:nu + npf]
    phi = np.zeros(S.n2, dtype=x.dtype)
    phi[S.interior_nodes] = x[nu + npf:nu + npf + ni]
    chi = x[nu + npf + ni:]
    return lam, pi, phi, chi


def solve_adjoint(prob, state, profile=None, check_viscosity=True):
    """Adjoint solve at ``state`` with the cost multiplier fixed to one.

    Raises
    ------
    AdjointSingularError
        When the transposed Jacobian is numerically singular.
    """
    S = prob.S
    if check_viscosity and viscosity_margin(prob, state.controls) <= 0:
        warnings.warn("viscosity condition not met; the adjoint may not be unique",
                      ViscosityWarning, stacklevel=2)
    Jr, J = reduced_jacobian(prob, state.u, state.w, state.psi, profile)
    dU, dW, dpsi = objective_gradients(prob, state.u, state.w, state.psi, profile)
    rhs = -np.concatenate([S.Pu.T @ dU, np.zeros(S.n1 - 1), dW[S.interior_nodes], dpsi])
    try:
        lu = factorize(Jr.T.tocsc())
        x = lu.solve(rhs)
    except SingularMatrixError as exc:
        raise AdjointSingularError(
            "adjoint system singular; the viscosity is likely too small for a unique multiplier") from exc
    if not np.all(np.isfinite(x)):
        raise AdjointSingularError(
            "adjoint system singular; the viscosity is likely too small for a unique multiplier")
    res = float(np.linalg.norm(Jr.T @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    lam, pi, phi, chi = _split(S, x)
    GU, GW = total_derivatives(J, (dU, dW), (lam, pi, phi, chi))
    xi = np.zeros(2 * S.n2)
    o = np.concatenate([S.open_u, S.open_u + S.n2])
    xi[o] = -GU[o]
    theta = np.zeros(S.n2)
    theta[S.boundary_nodes] = -GW[S.boundary_nodes]
    return AdjointSolution(lam, pi, phi, chi, xi, theta, res)


def total_derivatives(J, grads, adjoint):
    """Derivatives of the Lagrangian with respect to the full ``U`` and ``W`` vectors."""
    dU, dW = grads
    lam, pi, phi, chi = adjoint
    GU = dU + J["U", "U"].T @ lam + J["P", "U"].T @ pi + J["W", "U"].T @ phi + J["psi", "U"].T @ chi
    GW = dW + J["U", "W"].T @ lam + J["W", "W"].T @ phi
    return GU, GW


def adjoint_residual(prob, state, adj, profile=None):
    """Relative residual of the adjoint equations on the homogeneous test spaces."""
    S = prob.S
    Jr, _ = reduced_jacobian(prob, state.u, state.w, state.psi, profile)
    dU, dW, dpsi = objective_gradients(prob, state.u, state.w, state.psi, profile)
    rhs = -np.concatenate([S.Pu.T @ dU, np.zeros(S.n1 - 1), dW[S.interior_nodes], dpsi])
    x = np.concatenate([S.Pu.T @ adj.lam, adj.pi[S.p_free], adj.phi[S.interior_nodes], adj.chi])
    return float(np.linalg.norm(Jr.T @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))


def linearized_operator(prob, state, profile=None):
    """Linearized state operator, the matrix whose transpose the adjoint solves."""
    return reduced_jacobian(prob, state.u, state.w, state.psi, profile)[0]


def control_derivative(prob, controls, adj):
    """Euclidean derivative of the reduced objective in the control coefficients."""
    from .objective import control_metrics
    S1, S3 = control_metrics(prob)
    b = prob.beta
    return (b[4] * (S1 @ controls.g1) - adj.xi[prob.i1],
            b[5] * (S3 @ controls.g2) - adj.theta[prob.i3])


__all__ = ["AdjointSolution", "AdjointSingularError", "solve_adjoint", "adjoint_residual",
           "control_derivative", "linearized_operator", "total_derivatives"]
