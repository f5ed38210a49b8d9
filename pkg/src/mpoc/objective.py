"""Tracking objective and discrete trace norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fem import assembly as asm
from .linalg import schur_complement


@dataclass(frozen=True)
class HalfNormOperator:
    """Squared extension norm of traces on one boundary segment.

    ``g @ S @ g`` is the smallest H1 energy of a discrete function equal
    to ``g`` on the segment nodes and zero on the rest of the boundary.

    Attributes
    ----------
    nodes : ndarray of int
        Quadratic nodes carrying the segment trace.
    S : ndarray
        Dense symmetric positive definite matrix on those nodes.
    """

    nodes: np.ndarray
    S: np.ndarray

    def norm(self, g):
        return float(np.sqrt(max(np.real(g @ self.S @ g), 0.0)))

    def norm_vector(self, U):
        """Norm of the trace of a blocked velocity vector (componentwise)."""
        n2 = len(U) // 2
        return float(np.sqrt(self.norm(U[self.nodes]) ** 2 + self.norm(U[self.nodes + n2]) ** 2))

    @property
    def vector_matrix(self):
        return sla.block_diag(self.S, self.S)

    @property
    def cholesky(self):
        return np.linalg.cholesky(self.S)


def build_halfnorm(S, nodes, H1=None):
    """Schur complement of the H1 Gram matrix onto ``nodes``.

    Boundary nodes outside ``nodes`` are held at zero; interior nodes are
    eliminated.
    """
    H1 = H1 if H1 is not None else asm.assemble_h1(S)
    nodes = np.asarray(nodes, dtype=np.int64)
    keep = np.union1d(S.interior_nodes, nodes)
    H = H1.tocsr()[keep][:, keep]
    local = np.searchsorted(keep, nodes)
    return HalfNormOperator(nodes, schur_complement(H, local))


def halfnorm_segment(prob, name):
    """Half-norm operators of the named segments.

    ``"gamma1"`` and ``"gamma3"`` are the control segments (endpoints
    excluded), ``"open"`` is Gamma minus the closure of Gamma_2 and
    ``"boundary"`` is the whole boundary.
    """
    S = prob.S
    nodes = {"gamma1": S.gamma1_nodes, "gamma3": S.gamma3_nodes,
             "open": S.open_u, "boundary": S.boundary_nodes}[name]
    return S.cached(("halfnorm", name), lambda: build_halfnorm(S, nodes, prob.H1))


def control_metrics(prob):
    """Dense metric matrices ``(S1, S3)`` acting on the control vectors."""
    h1 = halfnorm_segment(prob, "gamma1")
    h3 = halfnorm_segment(prob, "gamma3")
    return prob.S.cached("control_metrics", lambda: (h1.vector_matrix, h3.S))


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ObjectiveBreakdown:
    terms: tuple

    @property
    def total(self):
        return float(sum(self.terms))

    def __iter__(self):
        return iter(self.terms)


def _fields(prob, U, W, psi, profile=None):
    S = prob.S
    n2 = S.n2
    profile = profile or prob.profile
    pq = S.values(psi)
    gx = S.grads(U[:n2])
    gy = S.grads(U[n2:])
    return dict(u1=S.values(U[:n2]), u2=S.values(U[n2:]), rot=gy[..., 0] - gx[..., 1],
                w=S.values(W), eta=profile(pq), deta=profile.derivative(pq))


def evaluate_J(prob, U, W, psi, controls, profile=None):
    """Addends of the objective, all integrals by quadrature.

    ``psi`` is the stream function of ``U`` so that the density is
    ``eta(psi)``.
    """
    S = prob.S
    b = prob.beta
    t = prob.targets
    f = _fields(prob, U, W, psi, profile)
    dx = S.dx
    S1, S3 = control_metrics(prob)
    terms = (
        0.5 * b[0] * np.sum(dx * np.abs(f["rot"]) ** 2),
        0.5 * b[1] * np.sum(dx * (np.abs(f["u1"] - t.ud[..., 0]) ** 2 + np.abs(f["u2"] - t.ud[..., 1]) ** 2)),
        0.5 * b[2] * np.sum(dx * np.abs(f["w"] - t.wd) ** 2),
        0.5 * b[3] * np.sum(dx * np.abs(f["eta"] - t.rhod) ** 2),
        0.5 * b[4] * float(controls.g1 @ S1 @ controls.g1),
        0.5 * b[5] * float(controls.g2 @ S3 @ controls.g2),
    )
    return ObjectiveBreakdown(tuple(float(np.real(x)) for x in terms))


def J_state(prob, state, controls=None, profile=None):
    return evaluate_J(prob, state.u, state.w, state.psi,
                      controls if controls is not None else state.controls, profile)


def objective_value(prob, U, W, psi, controls, profile=None):
    """Objective total; complex-safe (used by complex-step checks)."""
    S = prob.S
    b = prob.beta
    t = prob.targets
    f = _fields(prob, U, W, psi, profile)
    dx = S.dx
    S1, S3 = control_metrics(prob)
    return (0.5 * b[0] * np.sum(dx * f["rot"] ** 2)
            + 0.5 * b[1] * np.sum(dx * ((f["u1"] - t.ud[..., 0]) ** 2 + (f["u2"] - t.ud[..., 1]) ** 2))
            + 0.5 * b[2] * np.sum(dx * (f["w"] - t.wd) ** 2)
            + 0.5 * b[3] * np.sum(dx * (f["eta"] - t.rhod) ** 2)
            + 0.5 * b[4] * (controls.g1 @ S1 @ controls.g1)
            + 0.5 * b[5] * (controls.g2 @ S3 @ controls.g2))


def objective_gradients(prob, U, W, psi, profile=None):
    """Partial derivatives of the objective with respect to ``U``, ``W`` and ``psi``."""
    S = prob.S
    b = prob.beta
    t = prob.targets
    f = _fields(prob, U, W, psi, profile)
    dU = b[0] * (prob.RR @ U) + b[1] * np.concatenate([
        asm.assemble_load(S, f["u1"] - t.ud[..., 0]), asm.assemble_load(S, f["u2"] - t.ud[..., 1])])
    dW = b[2] * asm.assemble_load(S, f["w"] - t.wd)
    dpsi = b[3] * asm.assemble_load(S, (f["eta"] - t.rhod) * f["deta"])
    return dU, dW, dpsi
