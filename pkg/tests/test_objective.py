import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import channel, outflow_controls
from mpoc.mesh import rectangle_mesh
from mpoc.objective import (build_halfnorm, control_metrics, evaluate_J, halfnorm_segment,
                            objective_gradients, objective_value)
from mpoc.problem import ModelParams, Problem
from mpoc.state import solve_state


@pytest.fixture(scope="module")
def square():
    return Problem(rectangle_mesh(3, 3), ModelParams(beta=(0.0, 1.0, 0.0, 0.0, 1.0, 1.0)))


def test_velocity_misfit_example(square):
    S = square.S
    U = np.concatenate([np.ones(S.n2), np.zeros(S.n2)])
    J = evaluate_J(square, U, np.zeros(S.n2), np.zeros(S.n2), square.zero_controls())
    assert J.terms[1] == pytest.approx(0.5, rel=1e-14)
    assert J.total == pytest.approx(0.5, rel=1e-14)


def test_density_misfit_example(square):
    S = square.S
    prob = square.with_params(beta=(0.0, 0.0, 0.0, 3.0, 1.0, 1.0))
    J = evaluate_J(prob, np.zeros(2 * S.n2), np.zeros(S.n2), np.zeros(S.n2), prob.zero_controls())
    # constant density one against a zero target
    assert J.terms[3] == pytest.approx(1.5, rel=1e-14)


def test_rotation_term_example(square):
    S = square.S
    prob = square.with_params(beta=(2.0, 0.0, 0.0, 0.0, 1.0, 1.0))
    U = S.interpolate_vector(lambda x, y: (-y, x))  # rot u = 2
    J = evaluate_J(prob, U, np.zeros(S.n2), np.zeros(S.n2), prob.zero_controls())
    assert J.terms[0] == pytest.approx(4.0, rel=1e-13)


def test_halfnorm_is_minimal_extension_energy(square):
    S = square.S
    rng = np.random.default_rng(2)
    hn = build_halfnorm(S, S.boundary_nodes[::2], square.H1)
    g = rng.standard_normal(len(hn.nodes))
    v = np.zeros(S.n2)
    v[hn.nodes] = g
    inner = S.interior_nodes
    H = square.H1.tocsr()
    v[inner] = np.linalg.solve(H[inner][:, inner].toarray(), -(H[inner][:, hn.nodes] @ g))
    assert hn.norm(g) ** 2 == pytest.approx(v @ H @ v, rel=1e-11)
    # any other extension has larger energy
    for _ in range(5):
        z = v.copy()
        z[inner] += 0.1 * rng.standard_normal(len(inner))
        assert z @ H @ z > v @ H @ v


@given(st.floats(-50, 50).filter(lambda c: c == 0 or abs(c) > 1e-100), st.integers(0, 1000))
def test_halfnorm_homogeneous(c, seed):
    prob = Problem(rectangle_mesh(2, 2), ModelParams())
    hn = halfnorm_segment(prob, "boundary")
    g = np.random.default_rng(seed).standard_normal(len(hn.nodes))
    assert hn.norm(c * g) == pytest.approx(abs(c) * hn.norm(g), rel=1e-12, abs=1e-300)


def test_control_metrics_shapes_and_symmetry(channel_prob):
    S1, S3 = control_metrics(channel_prob)
    assert S1.shape == (channel_prob.n_g1,) * 2 and S3.shape == (channel_prob.n_g2,) * 2
    np.testing.assert_allclose(S1, S1.T, atol=1e-13)
    assert np.linalg.eigvalsh(S3).min() > 0


def test_partial_gradients_match_complex_step():
    prob = channel(nx=4, ny=2, targets="smooth")
    S = prob.S
    st = solve_state(prob, outflow_controls(prob, 0.2, 0.3), tol=1e-12)
    c = st.controls
    dU, dW, dpsi = objective_gradients(prob, st.u, st.w, st.psi)
    rng = np.random.default_rng(0)
    h = 1e-30
    for grad, slot in ((dU, 0), (dW, 1), (dpsi, 2)):
        d = rng.standard_normal(grad.size)
        args = [st.u.astype(complex), st.w.astype(complex), st.psi.astype(complex)]
        args[slot] = args[slot] + 1j * h * d
        cs = objective_value(prob, *args, c).imag / h
        assert cs == pytest.approx(grad @ d, rel=1e-12)
    assert objective_value(prob, st.u, st.w, st.psi, c) == pytest.approx(
        evaluate_J(prob, st.u, st.w, st.psi, c).total, rel=1e-14)
