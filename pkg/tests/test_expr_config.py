import numpy as np
import pytest

from helpers import SLIP
from mpoc.config import ConfigError, build_problem, load_config
from mpoc.expr import Expression, ExpressionError, parse
from mpoc.mesh import rectangle_mesh, save_mesh


def test_expression_values():
    x, y = np.array([1.0, 2.0]), np.array([0.5, 0.25])
    np.testing.assert_allclose(Expression("2*x^2 + sin(pi*y)")(x, y), [3.0, 8.0 + np.sqrt(0.5)])
    np.testing.assert_allclose(Expression("x**3 - -y")(x, y), [1.5, 8.25])
    np.testing.assert_allclose(Expression("-x^2")(x, y), [-1.0, -4.0])
    np.testing.assert_allclose(Expression("2^3^2")(x, y), [512.0, 512.0])
    fx, fy = parse("1, x*y", ("x", "y"), 2)(x, y)
    np.testing.assert_allclose(fy, [0.5, 0.5])
    assert np.broadcast_to(fx, x.shape).tolist() == [1.0, 1.0]
    np.testing.assert_allclose(parse("exp(s)", ("s",), 1)(np.zeros(2)), [1.0, 1.0])


@pytest.mark.parametrize("text, message", [
    ("x + z", "unknown name"), ("__import__('os')", "unknown function"), ("x[0]", "unsupported"),
    ("1 +", "cannot parse"), ("max(x)", "unknown function"), ("sin(x, y)", "one argument"),
])
def test_expression_rejects(text, message):
    with pytest.raises(ExpressionError, match=message):
        Expression(text, ("x", "y"))


def test_component_count_checked():
    with pytest.raises(ExpressionError):
        parse("x, y", ("x", "y"), 1)


def _write(tmp_path, body, mesh=True):
    if mesh:
        save_mesh(rectangle_mesh(4, 2, 0.0, 2.0, 0.0, 1.0, tags=SLIP), tmp_path / "m.msh")
    p = tmp_path / "c.cfg"
    p.write_text("[mesh]\nfile = m.msh\n" + body)
    return str(p)


def test_load_defaults_and_values(tmp_path):
    cfg = load_config(_write(tmp_path, "[params]\nmur = 0.5\nbeta = 0 1 0 0 0.1 0.2\n"
                                       "[boundary]\nu0 = 4*s*(1-s), 0\n[penalty]\neps = 1, 0.1\n"))
    assert cfg.mur == 0.5 and cfg.beta == (0, 1, 0, 0, 0.1, 0.2)
    assert cfg.eps == (1.0, 0.1) and cfg.seed == 42 and cfg.max_iter == 100
    prob = build_problem(cfg)
    assert not prob.controls.contains(prob.zero_controls())
    assert prob.params.mur == 0.5


@pytest.mark.parametrize("body, message", [
    ("[params]\nbeta = 0 0 0 0 0 0\n", "all zero"),
    ("[params]\nbeta = 0 1 0 0 0 1\n", "beta5"),
    ("[params]\nmu1 = -1\n", "mu1"),
    ("[params]\nspeed = 3\n", "unknown key"),
    ("[extras]\na = 1\n", "unknown section"),
    ("[params]\nf = x + q, 0\n", "unknown name"),
    ("[penalty]\neps = 1e-2, 1\n", "decreasing"),
    ("[solver]\nmax_iter = many\n", "bad value"),
    ("[targets]\nsource = oracle\n", "source"),
])
def test_invalid_configs(tmp_path, body, message):
    with pytest.raises(ConfigError, match=message):
        load_config(_write(tmp_path, body))


def test_missing_mesh_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[params]\nmur = 1\n")
    with pytest.raises(ConfigError, match="mesh"):
        load_config(str(p))


def test_state_targets(tmp_path):
    cfg = load_config(_write(tmp_path, "[params]\nmur = 0.5\n[boundary]\nu0 = 4*s*(1-s), 0\n"
                                       "[targets]\nsource = state\n[truth]\ng1 = 4*y*(1-y), 0\n"
                                       "g2 = 0.1\n"))
    prob = build_problem(cfg)
    assert np.abs(prob.targets.ud).max() > 0.5
    assert np.abs(prob.targets.wd).max() > 0
