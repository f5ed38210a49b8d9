import numpy as np
import pytest
import scipy.sparse.linalg as spla

import mpoc.adjoint as adjoint_mod
from helpers import channel, feasible_direction, outflow_controls
from mpoc.adjoint import (AdjointSingularError, adjoint_residual, control_derivative,
                          linearized_operator, solve_adjoint)
from mpoc.linalg import SingularMatrixError
from mpoc.objective import J_state, objective_gradients
from mpoc.state import solve_state


@pytest.fixture(scope="module")
def small():
    prob = channel(nx=4, ny=2, targets="smooth")
    st = solve_state(prob, outflow_controls(prob, 0.2, 0.3), tol=1e-13)
    return prob, st


def test_zero_tracking_gives_zero_adjoint(channel_prob, channel_state):
    prob = channel_prob.with_params(beta=(0.0, 0.0, 0.0, 0.0, 1.0, 1.0))
    adj = solve_adjoint(prob, channel_state, check_viscosity=False)
    for v in (adj.lam, adj.pi, adj.phi, adj.chi, adj.xi, adj.theta):
        assert np.abs(v).max() == 0.0


def test_adjoint_residual_small(small):
    prob, st = small
    adj = solve_adjoint(prob, st)
    assert adj.residual <= 1e-9
    assert adjoint_residual(prob, st, adj) <= 1e-9


def test_independent_solver_agrees(small):
    prob, st = small
    S = prob.S
    adj = solve_adjoint(prob, st)
    Jr = linearized_operator(prob, st)
    dU, dW, dpsi = objective_gradients(prob, st.u, st.w, st.psi)
    rhs = -np.concatenate([S.Pu.T @ dU, np.zeros(S.n1 - 1), dW[S.interior_nodes], dpsi])
    x = spla.spsolve(Jr.T.tocsc(), rhs, permc_spec="NATURAL")
    np.testing.assert_allclose(S.Pu @ x[:S.nu_free], adj.lam, atol=1e-9 * np.abs(adj.lam).max())


def test_boundary_functionals_supported_on_traces(small):
    prob, st = small
    S = prob.S
    adj = solve_adjoint(prob, st)
    off = np.setdiff1d(np.arange(S.n2), S.open_u)
    assert np.abs(adj.xi[off]).max() == 0.0 and np.abs(adj.xi[off + S.n2]).max() == 0.0
    assert np.abs(adj.theta[S.interior_nodes]).max() == 0.0
    assert np.abs(adj.phi[S.boundary_nodes]).max() == 0.0


def test_gradient_matches_finite_differences(small):
    prob, st = small
    adj = solve_adjoint(prob, st)
    e1, e2 = control_derivative(prob, st.controls, adj)
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(3):
        d = feasible_direction(prob, rng)
        vals = []
        for sgn in (1, -1):
            c = st.controls.copy()
            c.g1 = c.g1 + sgn * h * d.g1
            c.g2 = c.g2 + sgn * h * d.g2
            vals.append(J_state(prob, solve_state(prob, c, tol=1e-14, check_viscosity=False)).total)
        fd = (vals[0] - vals[1]) / (2 * h)
        assert fd == pytest.approx(e1 @ d.g1 + e2 @ d.g2, rel=1e-6)


def test_singular_system_reported(small, monkeypatch):
    prob, st = small

    def broken(*a, **k):
        raise SingularMatrixError("zero pivot", pivot=0)

    monkeypatch.setattr(adjoint_mod, "factorize", broken)
    with pytest.raises(AdjointSingularError, match="viscosity is likely too small"):
        solve_adjoint(prob, st)
