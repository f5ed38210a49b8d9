import types
import warnings

import numpy as np
import pytest

from helpers import channel, outflow_controls
from mpoc.mesh import rectangle_mesh
from mpoc.problem import ModelParams, Problem
from mpoc.state import (ViscosityWarning, lift_rotation, lift_velocity, reduced_jacobian,
                        reduced_residual, solve_state, state_residual_norm)
from mpoc.stream_density import FluxImbalanceError


def test_zero_data_one_iteration():
    prob = Problem(rectangle_mesh(3, 3), ModelParams())
    st = solve_state(prob)
    assert st.converged and st.iterations == 1
    assert np.abs(st.u).max() == 0.0 and np.abs(st.w).max() == 0.0
    assert np.abs(st.p).max() < 1e-14


def test_flux_imbalance_rejected(channel_prob):
    c = outflow_controls(channel_prob)
    c.g1 = c.g1 + 0.1 * np.abs(channel_prob.controls.a1)
    with pytest.raises(FluxImbalanceError):
        lift_velocity(channel_prob, c)


def test_velocity_lift(channel_prob):
    prob = channel_prob
    S = prob.S
    c = outflow_controls(prob, tangential=0.3)
    U = lift_velocity(prob, c)
    UD = prob.velocity_data(c)
    d = np.concatenate([S.dirichlet_u, S.dirichlet_u + S.n2])
    np.testing.assert_array_equal(U[d], UD[d])
    assert np.abs(prob.D.tocsr()[S.p_free] @ U).max() < 1e-12


def test_rotation_lift_reproduces_linear_trace(channel_prob):
    S = channel_prob.S
    x = S.nodes[:, 0].copy()
    shim = types.SimpleNamespace(S=S, K=channel_prob.K, rotation_data=lambda c: x)
    np.testing.assert_allclose(lift_rotation(shim, None), x, atol=1e-13)


def test_state_satisfies_constraints(channel_prob, channel_state):
    prob, st = channel_prob, channel_state
    S = prob.S
    assert st.converged
    assert np.abs(prob.D.tocsr()[S.p_free] @ st.u).max() < 1e-12
    UD = prob.velocity_data(st.controls)
    d = np.concatenate([S.dirichlet_u, S.dirichlet_u + S.n2])
    np.testing.assert_array_equal(st.u[d], UD[d])
    un = st.u[S.slip_nodes] * S.slip_normal[:, 0] + st.u[S.slip_nodes + S.n2] * S.slip_normal[:, 1]
    assert np.abs(un).max() < 1e-13
    np.testing.assert_allclose(st.w[S.boundary_nodes], prob.rotation_data(st.controls)[S.boundary_nodes])
    assert state_residual_norm(prob, st) < 1e-11
    assert np.all(st.rho > 0)


def test_warm_start_and_iteration_cap(channel_prob, channel_state):
    c = channel_state.controls
    warm = solve_state(channel_prob, c, tol=1e-10, initial=channel_state.u)
    assert warm.converged and warm.iterations == 1
    capped = solve_state(channel_prob, c, tol=1e-14, max_iter=2)
    assert not capped.converged and capped.iterations == 2
    assert np.all(np.isfinite(capped.u))


def test_reduced_jacobian_matches_complex_step():
    prob = channel(nx=4, ny=2)
    S = prob.S
    st = solve_state(prob, outflow_controls(prob, 0.2, 0.4), tol=1e-12)
    Jr, _ = reduced_jacobian(prob, st.u, st.w, st.psi)
    rng = np.random.default_rng(5)
    nu, npf, nw = S.nu_free, len(S.p_free), len(S.interior_nodes)
    d = rng.standard_normal(Jr.shape[1])
    h = 1e-30
    U = st.u + 1j * h * (S.Pu @ d[:nu])
    P = st.p.astype(complex)
    P[S.p_free] += 1j * h * d[nu:nu + npf]
    W = st.w.astype(complex)
    W[S.interior_nodes] += 1j * h * d[nu + npf:nu + npf + nw]
    psi = st.psi + 1j * h * d[nu + npf + nw:]
    cs = reduced_residual(prob, U, P, W, psi).imag / h
    lin = Jr @ d
    assert np.linalg.norm(cs - lin) <= 1e-12 * np.linalg.norm(lin)


def test_large_viscosity_contracts():
    prob = channel(mu1=20.0, mu2=20.0)
    st = solve_state(prob, outflow_controls(prob, 0.2, 0.3), tol=1e-12)
    h = np.array(st.picard_history)
    assert st.converged
    assert np.all(h[3:] / h[2:-1] < 0.9)


def test_small_viscosity_warns():
    prob = channel(mu1=1e-3, mu2=1e-3, mur=0.5)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        st = solve_state(prob, outflow_controls(prob), max_iter=3)
    assert any(issubclass(r.category, ViscosityWarning) for r in rec)
    assert len(st.picard_history) <= 3


def test_rotation_control_enters_trace(channel_prob):
    c = outflow_controls(channel_prob, rotation=0.4)
    st = solve_state(channel_prob, c, tol=1e-10)
    np.testing.assert_array_equal(st.w[channel_prob.i3], c.g2)
    assert np.abs(c.g2).max() > 0.1
