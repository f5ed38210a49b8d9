import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpoc.fem import SpaceSet, assemble_load
from mpoc.mesh import rectangle_mesh
from mpoc.stream_density import (FluxImbalanceError, ProfileError, apply_stream_adjoint, build_eta,
                                 constant_profile, psi_boundary_values, solve_stream,
                                 stream_residual)


@pytest.fixture(scope="module")
def S():
    return SpaceSet(rectangle_mesh(4, 3, 0.0, 1.5, 0.0, 1.0))


def _rot(S, phi_y, phi_x):
    """Velocity (d phi/dy, -d phi/dx) interpolated at the nodes."""
    return S.interpolate_vector(lambda x, y: (phi_y(x, y), -phi_x(x, y)))


def test_boundary_values_of_rotated_field(S):
    U = _rot(S, lambda x, y: x, lambda x, y: y)  # stream function xy
    psi = psi_boundary_values(S, U)
    x, y = S.nodes.T
    o = S.mesh.gamma0_origin
    bn = S.boundary_nodes
    np.testing.assert_allclose(psi[bn], (x * y)[bn] - x[o] * y[o], atol=1e-13)


@pytest.mark.parametrize("phi, phi_x, phi_y", [
    (lambda x, y: x * y, lambda x, y: y, lambda x, y: x),
    (lambda x, y: x * x + y * y, lambda x, y: 2 * x, lambda x, y: 2 * y),
    (lambda x, y: x * x - 3 * x * y + 0.5 * y * y, lambda x, y: 2 * x - 3 * y, lambda x, y: y - 3 * x),
])
def test_stream_exact_for_quadratics(S, phi, phi_x, phi_y):
    U = _rot(S, phi_y, phi_x)
    psi = solve_stream(S, U)
    ref = S.interpolate(phi)
    o = S.mesh.gamma0_origin
    np.testing.assert_allclose(psi, ref - ref[o], atol=1e-12)
    assert np.abs(stream_residual(S, U, psi)).max() < 1e-12


def test_flux_imbalance_rejected(S):
    U = S.interpolate_vector(lambda x, y: (x, 0 * y))
    with pytest.raises(FluxImbalanceError) as exc:
        psi_boundary_values(S, U)
    assert exc.value.imbalance == pytest.approx(1.5, rel=1e-12)


def test_stream_adjoint_duality(S):
    rng = np.random.default_rng(7)
    q = rng.standard_normal(S.dx.shape)
    r = apply_stream_adjoint(S, q)
    for _ in range(3):
        v = rng.standard_normal(2 * S.n2)
        n0v = solve_stream(S, v, psi_bc=np.zeros(S.n2))
        assert r @ v == pytest.approx(assemble_load(S, q) @ n0v, rel=1e-11)


def test_profile_examples():
    s = np.linspace(0.0, 1.0, 20)
    eta = build_eta(s, 1.0 + s * s)
    assert eta(0.5) == pytest.approx(1.25, abs=1e-3)
    assert eta.derivative(0.5) == pytest.approx(1.0, abs=1e-2)
    np.testing.assert_allclose(eta(s), 1.0 + s * s, atol=1e-14)
    # constant extension outside the sampled range
    assert eta(-3.0) == 1.0 and eta(7.0) == 2.0
    assert eta.derivative(-3.0) == 0.0 and eta.derivative(7.0) == 0.0
    # decreasing stream values give the same profile
    np.testing.assert_allclose(build_eta(-s, 1.0 + s * s)(-s), 1.0 + s * s, atol=1e-14)


def test_profile_derivative_matches_complex_step():
    s = np.linspace(0.0, 2.0, 9)
    eta = build_eta(s, 2.0 + np.sin(s))
    y = np.linspace(0.05, 1.95, 37)
    h = 1e-30
    np.testing.assert_allclose(eta.derivative(y), eta(y + 1j * h).imag / h, rtol=1e-12)


def test_profile_errors():
    with pytest.raises(ProfileError, match="not strictly monotone"):
        build_eta([0.0, 1.0, 0.5], [1.0, 2.0, 3.0])
    with pytest.raises(ProfileError):
        build_eta([0.0, 1.0], [1.0, -2.0])
    with pytest.raises(ProfileError):
        constant_profile(0.0)
    # constant density tolerates non-monotone samples
    assert build_eta([0.0, 1.0, 0.5], [2.0, 2.0, 2.0]).constant


@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=30), st.integers(0, 1000))
def test_profile_positive_and_bounded(rho, seed):
    rng = np.random.default_rng(seed)
    psi = np.cumsum(0.01 + rng.random(len(rho)))
    eta = build_eta(psi, rho)
    y = np.linspace(psi[0] - 1.0, psi[-1] + 1.0, 400)
    v = eta(y)
    assert np.all(v > 0)
    assert v.max() <= max(rho) * (1 + 1e-12) and v.min() >= min(rho) * (1 - 1e-12)
