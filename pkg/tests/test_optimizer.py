import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import SLIP, channel, outflow_controls
from mpoc.mesh import rectangle_mesh
from mpoc.objective import control_metrics
from mpoc.optimizer import (InfeasibleControlError, optimize, project_controls, s_norm, s_project,
                            vi_residuals)
from mpoc.problem import ControlPair, ModelParams, Problem, Targets


@pytest.fixture(scope="module")
def boxed():
    base = channel(nx=4, ny=2)
    return Problem(base.mesh, base.params, None, (-0.3, 1.1), (-0.2, 0.2))


def _raw(prob, seed, scale=2.0):
    rng = np.random.default_rng(seed)
    return ControlPair(scale * rng.standard_normal(prob.n_g1), scale * rng.standard_normal(prob.n_g2))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 20.0))
def test_projection_idempotent_and_optimal(boxed, seed, scale):
    raw = _raw(boxed, seed, scale)
    p = project_controls(boxed, raw)
    assert boxed.controls.contains(p)
    q = project_controls(boxed, p)
    np.testing.assert_allclose(q.g1, p.g1, atol=1e-12)
    np.testing.assert_allclose(q.g2, p.g2, atol=1e-12)
    # variational characterisation of the nearest point
    for k in range(5):
        h = project_controls(boxed, _raw(boxed, seed + k + 1))
        assert (raw.g1 - p.g1) @ (h.g1 - p.g1) + (raw.g2 - p.g2) @ (h.g2 - p.g2) <= 1e-9


@given(st.integers(0, 2 ** 32 - 1))
def test_metric_projection_optimal(boxed, seed):
    raw = _raw(boxed, seed)
    p = s_project(boxed, raw.g1, raw.g2)
    assert boxed.controls.contains(p, tol=1e-9)
    S1, S3 = control_metrics(boxed)
    for k in range(5):
        h = project_controls(boxed, _raw(boxed, seed + k + 1))
        val = (raw.g1 - p.g1) @ S1 @ (h.g1 - p.g1) + (raw.g2 - p.g2) @ S3 @ (h.g2 - p.g2)
        assert val <= 1e-8 * (1 + s_norm(boxed, raw.g1 - p.g1, raw.g2 - p.g2))


def test_feasible_controls_unchanged(channel_prob):
    c = outflow_controls(channel_prob, 0.2, 0.3)
    p = project_controls(channel_prob, c)
    np.testing.assert_allclose(p.g1, c.g1, atol=1e-14)
    np.testing.assert_array_equal(p.g2, c.g2)
    q = s_project(channel_prob, c.g1, c.g2)
    np.testing.assert_allclose(q.g1, c.g1, atol=1e-12)


def test_single_coefficient_clamped(boxed):
    c = outflow_controls(boxed)
    c.g2 = np.zeros(boxed.n_g2)
    c.g2[0] = 5.0
    p = project_controls(boxed, c)
    assert p.g2[0] == 0.2 and np.all(p.g2[1:] == 0.0)


def test_unreachable_flux_rejected():
    base = channel(nx=4, ny=2)
    prob = Problem(base.mesh, base.params, None, (0.0, 0.0), (-1.0, 1.0))
    with pytest.raises(InfeasibleControlError, match="control set empty for required flux"):
        project_controls(prob, prob.zero_controls())


def test_zero_control_cost_rejected(channel_prob):
    prob = channel_prob.with_params(beta=(0.3, 1.0, 0.5, 2.0, 0.0, 1e-2))
    with pytest.raises(ValueError, match="beta5"):
        optimize(prob)


def _dominant_cost_problem():
    mesh = rectangle_mesh(4, 4, tags=SLIP)
    prob = Problem(mesh, ModelParams(mur=0.5, beta=(0.0, 1e-6, 1e-6, 0.0, 10.0, 10.0)))
    return prob.with_targets(Targets.from_functions(prob.S, lambda x, y: (1.0 + 0 * x, 0 * y)))


def test_dominant_cost_keeps_zero_controls():
    prob = _dominant_cost_problem()
    res = optimize(prob, tol_vi=1e-10)
    assert res.reason.startswith("converged")
    assert np.abs(res.controls.g1).max() < 1e-9 and np.abs(res.controls.g2).max() < 1e-9
    start = ControlPair(0.1 * np.ones(prob.n_g1), 0.1 * np.ones(prob.n_g2))
    res = optimize(prob, init=start, tol_vi=1e-10)
    assert res.reason.startswith("converged")
    assert s_norm(prob, res.controls.g1, res.controls.g2) < 1e-8


def test_larger_control_cost_shrinks_controls():
    prob = channel(nx=4, ny=2, targets="smooth")
    norms = []
    for b5 in (1e-2, 2e-2):
        p = prob.with_params(beta=(0.3, 1.0, 0.5, 2.0, b5, 2 * b5))
        res = optimize(p, init=outflow_controls(p), tol_vi=1e-9)
        assert res.reason.startswith("converged")
        assert min(res.vi) >= -1e-6
        norms.append(s_norm(p, res.controls.g1, res.controls.g2))
    assert norms[1] < norms[0]


def test_history_and_certificates():
    prob = channel(nx=4, ny=2, targets="smooth")
    seen = []
    res = optimize(prob, init=outflow_controls(prob), tol_vi=1e-9,
                   callback=lambda it, g, s, a, h: seen.append(it))
    J = [h["J"] for h in res.history]
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(J, J[1:]))
    assert seen == list(range(len(res.history)))
    assert "vi" in res.history[-1] and "projection" in res.history[-1]
    assert min(vi_residuals(prob, res.controls, res.adjoint, n=20)) >= -1e-6
    assert max(res.projection) <= 1e-5 * (1 + np.linalg.norm(res.controls.g1))
