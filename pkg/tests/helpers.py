"""Shared problem builders for the test suite."""
import numpy as np

from mpoc.mesh import rectangle_mesh
from mpoc.optimizer import project_controls
from mpoc.problem import ControlPair, ModelParams, Problem, Targets

SLIP = dict(top=("G2", "G3"), bottom=("G2", "G3"))


def parabola(s):
    return (4.0 * s * (1.0 - s), 0.0 * s)


def channel(nx=8, ny=4, length=2.0, slip=True, rho0=None, targets=None, **kw):
    """Channel with inflow on the left, controlled outflow on the right."""
    mesh = rectangle_mesh(nx, ny, 0.0, length, 0.0, 1.0, tags=SLIP if slip else None)
    defaults = dict(mu1=1.0, mu2=1.0, mur=0.5, alpha=0.3 if slip else 0.0, u0=parabola,
                    rho0=rho0 or (lambda s: 1.0 + 0.5 * s),
                    f=lambda x, y: (np.sin(y), 0.3 * x), g=lambda x, y: x * y,
                    beta=(0.3, 1.0, 0.5, 2.0, 1e-2, 1e-2))
    defaults.update(kw)
    prob = Problem(mesh, ModelParams(**defaults))
    if targets == "smooth":
        x, y = prob.S.xq[..., 0], prob.S.xq[..., 1]
        prob = prob.with_targets(Targets(np.stack([np.sin(3 * x) * y, x * x], -1),
                                         np.cos(x + y), 1.0 + 0.3 * x))
    return prob


def outflow_controls(prob, tangential=0.0, rotation=0.0):
    """Admissible controls: parabolic outflow plus optional tangential and rotation parts."""
    S = prob.S
    p1 = S.nodes[S.gamma1_nodes]
    p3 = S.nodes[S.gamma3_nodes]
    g1 = np.concatenate([4 * p1[:, 1] * (1 - p1[:, 1]), tangential * np.sin(np.pi * p1[:, 1])])
    g2 = rotation * np.sin(np.pi * p3[:, 0] / p3[:, 0].max())
    return project_controls(prob, ControlPair(g1, g2))


def feasible_direction(prob, rng):
    a1 = prob.controls.a1
    d1 = rng.standard_normal(prob.n_g1)
    d1 -= a1 * (a1 @ d1) / (a1 @ a1)
    return ControlPair(d1, rng.standard_normal(prob.n_g2))
