"""Problem configuration files.

Line-based ``key = value`` entries under ``[section]`` headers; ``#`` and
``;`` start comments.  Sections and keys (defaults in parentheses):

``[mesh]``
    ``file`` (required, relative to the config file), ``refine`` (0).
``[params]``
    ``mu1``, ``mu2`` (1), ``mur``, ``alpha`` (0), ``beta`` (six numbers),
    ``f`` (vector expression in x, y; ``0, 0``), ``g`` (``0``).
``[boundary]``
    ``u0`` (vector in s), ``w0`` (``0``), ``rho0`` (``1``); s is the arc
    length along Gamma_0 from its origin.
``[targets]``
    ``ud`` (vector in x, y), ``wd``, ``rhod``; or ``source = state`` to take
    the targets from the state computed with the ``[truth]`` controls.
``[controls]``, ``[truth]``
    ``g1`` (vector in x, y, sampled at the Gamma_1 nodes), ``g2`` (x, y).
    ``[controls]`` also holds the boxes ``g1_lower``, ``g1_upper``,
    ``g2_lower``, ``g2_upper`` (unbounded by default).
``[solver]``
    ``tol`` (1e-10), ``max_iter`` (100), ``relaxation`` (1), ``threads`` (1).
``[optimizer]``
    ``tol_vi`` (1e-8), ``max_outer`` (200), ``step0``, ``competitors`` (50).
``[penalty]``
    ``eps`` (``1, 1e-2, 1e-4``), ``max_nfev`` (200).
``[gradcheck]``
    ``directions`` (5), ``step`` (1e-5), ``tol`` (1e-4).
``[run]``
    ``seed`` (42), ``out`` (``out``).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .expr import ExpressionError, parse


class ConfigError(ValueError):
    pass


KNOWN = {
    "mesh": {"file", "refine"},
    "params": {"mu1", "mu2", "mur", "alpha", "beta", "f", "g"},
    "boundary": {"u0", "w0", "rho0"},
    "targets": {"ud", "wd", "rhod", "source"},
    "controls": {"g1", "g2", "g1_lower", "g1_upper", "g2_lower", "g2_upper"},
    "truth": {"g1", "g2"},
    "solver": {"tol", "max_iter", "relaxation", "threads"},
    "optimizer": {"tol_vi", "max_outer", "step0", "competitors"},
    "penalty": {"eps", "max_nfev"},
    "gradcheck": {"directions", "step", "tol"},
    "run": {"seed", "out"},
}


@dataclass
class ProblemConfig:
    path: str
    mesh_path: str
    refine: int = 0
    mu1: float = 1.0
    mu2: float = 1.0
    mur: float = 0.0
    alpha: float = 0.0
    beta: tuple = (0.0, 1.0, 0.0, 0.0, 1.0, 1.0)
    expr: dict = field(default_factory=dict)
    target_source: str = "expressions"
    bounds: tuple = ((-np.inf, np.inf), (-np.inf, np.inf))
    tol: float = 1e-10
    max_iter: int = 100
    relaxation: float = 1.0
    threads: int = 1
    tol_vi: float = 1e-8
    max_outer: int = 200
    step0: float | None = None
    competitors: int = 50
    eps: tuple = (1.0, 1e-2, 1e-4)
    max_nfev: int = 200
    directions: int = 5
    fd_step: float = 1e-5
    grad_tol: float = 1e-4
    seed: int = 42
    out: str = "out"


_EXPR = {  # key: (section, variables, components, default)
    "f": ("params", ("x", "y"), 2, "0, 0"),
    "g": ("params", ("x", "y"), 1, "0"),
    "u0": ("boundary", ("s",), 2, "0, 0"),
    "w0": ("boundary", ("s",), 1, "0"),
    "rho0": ("boundary", ("s",), 1, "1"),
    "ud": ("targets", ("x", "y"), 2, "0, 0"),
    "wd": ("targets", ("x", "y"), 1, "0"),
    "rhod": ("targets", ("x", "y"), 1, "0"),
    "g1": ("controls", ("x", "y"), 2, "0, 0"),
    "g2": ("controls", ("x", "y"), 1, "0"),
    "truth_g1": ("truth", ("x", "y"), 2, "0, 0"),
    "truth_g2": ("truth", ("x", "y"), 1, "0"),
}


def _numbers(text, key):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: bad value {raw!r}") from None


def load_config(path):
    """Read and validate a configuration file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp.options(sec)) - KNOWN[sec]
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")
    if not cp.has_option("mesh", "file"):
        raise ConfigError("missing required key [mesh] file")
    base = os.path.dirname(os.path.abspath(path))
    c = ProblemConfig(path=path, mesh_path=os.path.join(base, cp.get("mesh", "file")))
    c.refine = _get(cp, "mesh", "refine", int, 0)
    for k in ("mu1", "mu2", "mur", "alpha"):
        setattr(c, k, _get(cp, "params", k, float, getattr(c, k)))
    if cp.has_option("params", "beta"):
        c.beta = _numbers(cp.get("params", "beta"), "beta")
        if len(c.beta) != 6:
            raise ConfigError("beta needs six weights")
    for key, (sec, var, size, default) in _EXPR.items():
        opt = key.replace("truth_", "")
        text = cp.get(sec, opt) if cp.has_option(sec, opt) else default
        try:
            c.expr[key] = parse(text, var, size)
        except ExpressionError as exc:
            raise ConfigError(f"[{sec}] {opt}: {exc}") from None
    c.target_source = _get(cp, "targets", "source", str, "expressions").strip()
    if c.target_source not in ("expressions", "state"):
        raise ConfigError("[targets] source must be 'expressions' or 'state'")
    b = [_get(cp, "controls", k, float, d) for k, d in
         (("g1_lower", -np.inf), ("g1_upper", np.inf), ("g2_lower", -np.inf), ("g2_upper", np.inf))]
    c.bounds = ((b[0], b[1]), (b[2], b[3]))
    c.tol = _get(cp, "solver", "tol", float, c.tol)
    c.max_iter = _get(cp, "solver", "max_iter", int, c.max_iter)
    c.relaxation = _get(cp, "solver", "relaxation", float, c.relaxation)
    c.threads = _get(cp, "solver", "threads", int, c.threads)
    c.tol_vi = _get(cp, "optimizer", "tol_vi", float, c.tol_vi)
    c.max_outer = _get(cp, "optimizer", "max_outer", int, c.max_outer)
    c.step0 = _get(cp, "optimizer", "step0", float, None)
    c.competitors = _get(cp, "optimizer", "competitors", int, c.competitors)
    if cp.has_option("penalty", "eps"):
        c.eps = _numbers(cp.get("penalty", "eps"), "eps")
    c.max_nfev = _get(cp, "penalty", "max_nfev", int, c.max_nfev)
    c.directions = _get(cp, "gradcheck", "directions", int, c.directions)
    c.fd_step = _get(cp, "gradcheck", "step", float, c.fd_step)
    c.grad_tol = _get(cp, "gradcheck", "tol", float, c.grad_tol)
    c.seed = _get(cp, "run", "seed", int, c.seed)
    c.out = _get(cp, "run", "out", str, c.out)
    validate(c)
    return c


def validate(c):
    if not (c.mu1 > 0 and c.mu2 > 0):
        raise ConfigError("mu1 and mu2 must be positive")
    if c.mur < 0 or c.alpha < 0:
        raise ConfigError("mur and alpha must be nonnegative")
    if any(b < 0 for b in c.beta):
        raise ConfigError("beta weights must be nonnegative")
    if not any(b > 0 for b in c.beta):
        raise ConfigError("objective weights beta are all zero")
    if not (c.beta[4] > 0 and c.beta[5] > 0):
        raise ConfigError("beta5 and beta6 must be positive")
    for lo, hi in c.bounds:
        if lo > hi:
            raise ConfigError("control lower bound exceeds upper bound")
    if c.refine < 0:
        raise ConfigError("refine must be nonnegative")
    if c.tol <= 0 or c.max_iter < 1 or not 0 < c.relaxation <= 1:
        raise ConfigError("solver tol > 0, max_iter >= 1 and 0 < relaxation <= 1 required")
    if c.threads < 1:
        raise ConfigError("threads must be at least 1")
    e = list(c.eps)
    if not e or any(v <= 0 for v in e) or any(b >= a for a, b in zip(e, e[1:])):
        raise ConfigError("penalty eps must be positive and strictly decreasing")
    return c


# ----------------------------------------------------------------------
def build_problem(c, mesh=None):
    """Problem for a configuration, optionally on a given (refined) mesh."""
    from .mesh import load_mesh, refine_uniform
    from .problem import ModelParams, Problem, Targets
    from .state import solve_state

    if mesh is None:
        mesh = load_mesh(c.mesh_path)
        for _ in range(c.refine):
            mesh = refine_uniform(mesh)
    e = c.expr
    params = ModelParams(mu1=c.mu1, mu2=c.mu2, mur=c.mur, alpha=c.alpha,
                         f=e["f"], g=e["g"], u0=e["u0"], w0=e["w0"], rho0=e["rho0"], beta=tuple(c.beta))
    prob = Problem(mesh, params, None, c.bounds[0], c.bounds[1])
    if c.target_source == "state":
        truth = controls_from(prob, e["truth_g1"], e["truth_g2"])
        st = solve_state(prob, truth, tol=min(c.tol, 1e-12), max_iter=c.max_iter,
                         relaxation=c.relaxation, check_viscosity=False)
        if not st.converged:
            raise RuntimeError("state for the [truth] controls did not converge")
        return prob.with_targets(Targets.from_state(prob.S, st))
    return prob.with_targets(Targets.from_functions(prob.S, e["ud"], e["wd"], e["rhod"]))


def controls_from(prob, g1, g2):
    """Admissible controls sampled from expressions (projected onto the control set)."""
    from .optimizer import project_controls
    from .problem import ControlPair

    S = prob.S
    x1 = S.nodes[S.gamma1_nodes]
    gx, gy = g1(x1[:, 0], x1[:, 1])
    x3 = S.nodes[S.gamma3_nodes]
    raw = ControlPair(np.concatenate([gx, gy]), np.asarray(g2(x3[:, 0], x3[:, 1]), dtype=float))
    return project_controls(prob, raw)
