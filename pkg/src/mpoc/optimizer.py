"""Projected-gradient boundary control with adjoint gradients.

The admissible set is a box per control coefficient plus the Gamma_1
flux equality.  Gradients are taken in the trace metric ``S`` of each
control segment, and steps are projected in that metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .adjoint import AdjointSingularError, control_derivative, solve_adjoint
from .linalg import box_qp
from .objective import J_state, control_metrics
from .problem import ControlPair
from .state import solve_state


class InfeasibleControlError(ValueError):
    pass


def require_control_cost(prob):
    b = prob.beta
    if not (b[4] > 0 and b[5] > 0):
        raise ValueError("control cost weights beta5 and beta6 must be positive")


# ----------------------------------------------------------------------
# projections
def _flux_range(a, lo, hi):
    return float(np.sum(np.minimum(a * lo, a * hi))), float(np.sum(np.maximum(a * lo, a * hi)))


def _check_reachable(cs):
    a = cs.a1
    fmin, fmax = _flux_range(a[a != 0], cs.lo1[a != 0], cs.hi1[a != 0])
    tol = 1e-12 * (1.0 + abs(cs.flux_target))
    if not (fmin - tol <= cs.flux_target <= fmax + tol):
        raise InfeasibleControlError("control set empty for required flux")


def project_controls(prob, raw):
    """Nearest admissible controls in the coefficient (Euclidean) metric.

    The result is ``clip(g1 + t a1)`` with the scalar ``t`` fixing the
    flux; ``t`` is found exactly on the piecewise-linear flux curve.
    """
    cs = prob.controls
    _check_reachable(cs)
    a, b = cs.a1, cs.flux_target
    x = np.asarray(raw.g1, dtype=float)
    lo, hi = cs.lo1, cs.hi1
    g2 = np.clip(raw.g2, cs.lo2, cs.hi2)

    def flux(t):
        return a @ np.clip(x + t * a, lo, hi)

    nz = a != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        br = np.concatenate([(lo[nz] - x[nz]) / a[nz], (hi[nz] - x[nz]) / a[nz]])
    br = np.unique(np.concatenate([br[np.isfinite(br)], [0.0]]))
    vals = np.array([flux(t) for t in br])
    # flux(t) is nondecreasing; bracket the target between breakpoints
    k = np.searchsorted(vals, b)
    if k == 0:
        t0, f0 = br[0], vals[0]
        slope = a[nz & (x + (t0 - 1.0) * a > lo) & (x + (t0 - 1.0) * a < hi)]
        t = t0 - (f0 - b) / max(slope @ slope, 1e-300)
    elif k == len(br):
        t0, f0 = br[-1], vals[-1]
        slope = a[nz & (x + (t0 + 1.0) * a > lo) & (x + (t0 + 1.0) * a < hi)]
        t = t0 + (b - f0) / max(slope @ slope, 1e-300)
    else:
        t0, t1, f0, f1 = br[k - 1], br[k], vals[k - 1], vals[k]
        t = t0 if f1 == f0 else t0 + (b - f0) * (t1 - t0) / (f1 - f0)
    g1 = np.clip(x + t * a, lo, hi)
    # exact flux on a free coefficient (removes interpolation round-off)
    free = nz & (g1 > lo) & (g1 < hi)
    if free.any():
        g1[free] += a[free] * (b - a @ g1) / (a[free] @ a[free])
    return ControlPair(g1, g2)


def _s_project_box(Sm, v, lo, hi):
    if np.all(np.isinf(lo)) and np.all(np.isinf(hi)):
        return v.copy()
    return box_qp(Sm, -Sm @ v, lo, hi, x0=np.clip(v, lo, hi))


def s_project(prob, v1, v2):
    """Projection onto the admissible set in the trace metrics ``(S1, S3)``."""
    cs = prob.controls
    _check_reachable(cs)
    S1, S3 = control_metrics(prob)
    a, b = cs.a1, cs.flux_target
    g2 = _s_project_box(S3, v2, cs.lo2, cs.hi2)
    if np.all(np.isinf(cs.lo1)) and np.all(np.isinf(cs.hi1)):
        c = np.linalg.solve(S1, a)
        return ControlPair(v1 + c * (b - a @ v1) / (a @ c), g2)

    def x_of(mu):
        return box_qp(S1, -(S1 @ v1) - mu * a, cs.lo1, cs.hi1, x0=np.clip(v1, cs.lo1, cs.hi1))

    def gap(mu):
        return a @ x_of(mu) - b

    lo_mu, hi_mu = -1.0, 1.0
    while gap(lo_mu) > 0:
        lo_mu *= 4.0
    while gap(hi_mu) < 0:
        hi_mu *= 4.0
    mu = brentq(gap, lo_mu, hi_mu, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return ControlPair(x_of(mu), g2)


def s_norm(prob, d1, d2):
    S1, S3 = control_metrics(prob)
    return float(np.sqrt(max(d1 @ S1 @ d1, 0.0) + max(d2 @ S3 @ d2, 0.0)))


# ----------------------------------------------------------------------
def reduced_gradient(prob, state, adj, controls=None):
    """Trace-metric gradient representatives ``(beta5 g1 - S1^-1 xi, beta6 g2 - S3^-1 theta)``."""
    controls = controls if controls is not None else state.controls
    S1, S3 = control_metrics(prob)
    e1, e2 = control_derivative(prob, controls, adj)
    return np.linalg.solve(S1, e1), np.linalg.solve(S3, e2)


def vi_residuals(prob, controls, adj, n=50, seed=42, scale=1.0):
    """Smallest sampled values of both variational inequalities.

    Competitors are projections of random perturbations of ``controls``.
    Each residual is ``<dj/dg, h - g>`` divided by the S-norm of ``h - g``.
    """
    rng = np.random.default_rng(seed)
    e1, e2 = control_derivative(prob, controls, adj)
    S1, S3 = control_metrics(prob)
    r1, r2 = [], []
    for _ in range(n):
        raw = ControlPair(controls.g1 + scale * rng.standard_normal(len(controls.g1)),
                          controls.g2 + scale * rng.standard_normal(len(controls.g2)))
        h = project_controls(prob, raw)
        d1, d2 = h.g1 - controls.g1, h.g2 - controls.g2
        n1 = np.sqrt(max(d1 @ S1 @ d1, 1e-300))
        n2 = np.sqrt(max(d2 @ S3 @ d2, 1e-300))
        r1.append(e1 @ d1 / n1 if n1 > 1e-150 else 0.0)
        r2.append(e2 @ d2 / n2 if n2 > 1e-150 else 0.0)
    return float(min(r1, default=0.0)), float(min(r2, default=0.0))


def projection_distance(prob, controls, adj):
    """S-distances between the controls and the projections of the scaled boundary functionals."""
    S1, S3 = control_metrics(prob)
    b = prob.beta
    v1 = np.linalg.solve(S1, adj.xi[prob.i1]) / b[4]
    v2 = np.linalg.solve(S3, adj.theta[prob.i3]) / b[5]
    p = s_project(prob, v1, v2)
    d1, d2 = controls.g1 - p.g1, controls.g2 - p.g2
    return (float(np.sqrt(max(d1 @ S1 @ d1, 0.0))), float(np.sqrt(max(d2 @ S3 @ d2, 0.0))))


# ----------------------------------------------------------------------
@dataclass
class OptimizationResult:
    controls: ControlPair
    state: object
    adjoint: object
    history: list = field(default_factory=list)
    reason: str = ""
    vi: tuple = (0.0, 0.0)
    projection: tuple = (0.0, 0.0)

    @property
    def J(self):
        return self.history[-1]["J"] if self.history else float("nan")


def _evaluate(prob, controls, state_tol, max_picard, initial=None):
    st = solve_state(prob, controls, tol=state_tol, max_iter=max_picard, check_viscosity=False,
                     initial=initial)
    if not st.converged:
        return st, float("inf")
    return st, J_state(prob, st).total


def optimize(prob, init=None, step0=None, shrink=0.5, max_outer=200, tol_vi=1e-8, seed=42,
             state_tol=1e-12, max_picard=100, n_competitors=50, callback=None):
    """Projected gradient descent with Armijo backtracking and Barzilai-Borwein steps.

    Terminates when the projected-gradient S-norm ``|g - P(g - grad j)|``
    falls below ``tol_vi`` or after ``max_outer`` iterations.

    Returns
    -------
    OptimizationResult
    """
    require_control_cost(prob)
    g = project_controls(prob, init if init is not None else prob.zero_controls())
    st, j = _evaluate(prob, g, state_tol, max_picard)
    if not np.isfinite(j):
        raise RuntimeError("state solver did not converge at the initial controls")
    history = []
    step = step0
    prev = None
    reason = "max_outer"
    for it in range(max_outer + 1):
        adj = solve_adjoint(prob, st, check_viscosity=False)
        d1, d2 = reduced_gradient(prob, st, adj, g)
        e1, e2 = control_derivative(prob, g, adj)
        unit = s_project(prob, g.g1 - d1, g.g2 - d2)
        pg = s_norm(prob, g.g1 - unit.g1, g.g2 - unit.g2)
        br = J_state(prob, st, g)
        history.append(dict(iteration=it, J=br.total, terms=br.terms, pg_norm=pg, step=step or 0.0))
        if callback:
            callback(it, g, st, adj, history[-1])
        if pg <= tol_vi:
            reason = "converged"
            break
        if it == max_outer:
            break
        if prev is not None:
            s1 = g.g1 - prev[0].g1
            s2 = g.g2 - prev[0].g2
            y = (e1 - prev[1]) @ s1 + (e2 - prev[2]) @ s2
            ss = s_norm(prob, s1, s2) ** 2
            step = ss / y if y > 0 else (step or 1.0)
        elif step is None:
            step = 1.0 / max(prob.beta[4], prob.beta[5])
        accepted = failed = False
        while step >= 1e-12:
            trial = s_project(prob, g.g1 - step * d1, g.g2 - step * d2)
            st_t, j_t = _evaluate(prob, trial, state_tol, max_picard, st.u)
            dec = e1 @ (trial.g1 - g.g1) + e2 @ (trial.g2 - g.g2)
            failed |= not np.isfinite(j_t)
            if np.isfinite(j_t) and j_t <= j + 1e-4 * dec + 1e-15 * abs(j):
                accepted = True
                break
            step *= shrink
        if not accepted:
            if failed:
                reason = "state solver limited"
            elif pg * pg <= 1e-10 * max(abs(j), 1.0):
                # no representable decrease left at this accuracy of j
                reason = "converged (round-off)"
            else:
                reason = "line search stalled"
            break
        prev = (g, e1, e2)
        g, st, j = trial, st_t, j_t
    vi = vi_residuals(prob, g, adj, n=n_competitors, seed=seed)
    proj = projection_distance(prob, g, adj)
    history[-1].update(vi=min(vi), projection=max(proj))
    return OptimizationResult(g, st, adj, history, reason, vi, proj)


__all__ = ["InfeasibleControlError", "OptimizationResult", "optimize", "project_controls",
           "projection_distance", "reduced_gradient", "s_norm", "s_project", "vi_residuals",
           "AdjointSingularError"]
