"""Command-line driver.

``mpoc solve|gradcheck|optimize|penalty <config> [--refine N] [--out DIR]``

Exit codes: 0 success, 1 numerical failure, 2 input error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io
from .adjoint import AdjointSingularError
from .config import ConfigError, build_problem, controls_from, load_config
from .expr import ExpressionError
from .fem import kernels
from .fem.assembly import DensityError
from .linalg import SingularMatrixError
from .mesh import MeshError, load_mesh, refine_uniform
from .optimizer import InfeasibleControlError
from .stream_density import FluxImbalanceError, ProfileError

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2


def _say(*args):
    print(*args, flush=True)


def _initial_controls(cfg, prob):
    return controls_from(prob, cfg.expr["g1"], cfg.expr["g2"])


def _nodal_density(prob, psi):
    return prob.profile(psi)


def _write_fields(out, prob, state, adj=None, tag=""):
    S = prob.S
    io.write_vtk(os.path.join(out, f"u{tag}.vtk"), S, "velocity", state.u)
    io.write_vtk(os.path.join(out, f"w{tag}.vtk"), S, "microrotation", state.w)
    io.write_vtk(os.path.join(out, f"rho{tag}.vtk"), S, "density", _nodal_density(prob, state.psi))
    io.write_vtk(os.path.join(out, f"psi{tag}.vtk"), S, "stream_function", state.psi)
    if adj is not None:
        io.write_vtk(os.path.join(out, f"lambda{tag}.vtk"), S, "velocity_adjoint", adj.lam)
        io.write_vtk(os.path.join(out, f"phi{tag}.vtk"), S, "rotation_adjoint", adj.phi)


# ----------------------------------------------------------------------
def cmd_solve(cfg, out, refine):
    from .state import h1_norm, solve_state

    base = load_mesh(cfg.mesh_path)
    for _ in range(cfg.refine):
        base = refine_uniform(base)
    levels = [None] if refine is None else list(range(refine))
    status = EXIT_OK
    mesh = base
    for lev in levels:
        if lev:
            mesh = refine_uniform(mesh)
        prob = build_problem(cfg, mesh)
        controls = _initial_controls(cfg, prob)
        st = solve_state(prob, controls, tol=cfg.tol, max_iter=cfg.max_iter, relaxation=cfg.relaxation)
        tag = "" if lev is None else f"_h{mesh.h:.6g}"
        nrm = h1_norm(prob, st.u) + h1_norm(prob, st.w)
        rows = [(k + 1, d, e, st.theta_bound, nrm)
                for k, (d, e) in enumerate(zip(st.picard_history, st.energy_history + [np.nan]))]
        io.write_csv(os.path.join(out, f"state_report{tag}.csv"),
                     ["iteration", "update_norm_H1", "energy_residual_rel", "theta_data_bound",
                      "state_norm_H1_u_plus_w"], rows)
        _write_fields(out, prob, st, tag=tag)
        _say(f"h={mesh.h:.6g} dofs={2 * prob.S.n2 + prob.S.n1 + prob.S.n2} iterations={st.iterations} "
             f"converged={st.converged} ratio={st.energy_ratio:.6g}")
        if not st.converged:
            _say("error: Picard iteration did not converge (report written)")
            status = EXIT_NUMERICAL
    return status


def cmd_gradcheck(cfg, out, refine):
    from .adjoint import control_derivative, solve_adjoint
    from .objective import J_state
    from .state import solve_state

    prob = _problem(cfg, refine)
    g = _initial_controls(cfg, prob)
    tol = min(cfg.tol, 1e-13)

    def j(c):
        st = solve_state(prob, c, tol=tol, max_iter=cfg.max_iter, relaxation=cfg.relaxation,
                         check_viscosity=False)
        if not st.converged:
            raise RuntimeError("state solve did not converge during the gradient check")
        return J_state(prob, st).total, st

    _, st = j(g)
    adj = solve_adjoint(prob, st)
    e1, e2 = control_derivative(prob, g, adj)
    rng = np.random.default_rng(cfg.seed)
    a1 = prob.controls.a1
    rows = []
    _say(f"{'dir':>4} {'finite difference':>24} {'adjoint':>24} {'rel. error':>12}")
    for k in range(cfg.directions):
        d1 = rng.standard_normal(prob.n_g1)
        d1 -= a1 * (a1 @ d1) / (a1 @ a1)
        d2 = rng.standard_normal(prob.n_g2)
        h = cfg.fd_step
        plus, minus = g.copy(), g.copy()
        plus.g1 += h * d1
        plus.g2 += h * d2
        minus.g1 -= h * d1
        minus.g2 -= h * d2
        fd = (j(plus)[0] - j(minus)[0]) / (2 * h)
        an = e1 @ d1 + e2 @ d2
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-300)
        rows.append((k + 1, fd, an, rel))
        _say(f"{k + 1:>4} {fd:>24.16e} {an:>24.16e} {rel:>12.3e}")
    worst = max(r[3] for r in rows)
    io.write_csv(os.path.join(out, "gradcheck.csv"),
                 ["direction", "finite_difference", "adjoint", "relative_error"], rows)
    _say(f"max relative error {worst:.3e} (tolerance {cfg.grad_tol:g})")
    return EXIT_OK if worst <= cfg.grad_tol else EXIT_NUMERICAL


def _run_optimizer(cfg, prob):
    from .optimizer import optimize, projection_distance, vi_residuals

    rows = []

    def record(it, g, st, adj, h):
        vi = min(vi_residuals(prob, g, adj, n=cfg.competitors, seed=cfg.seed))
        pd = max(projection_distance(prob, g, adj))
        rows.append((it, h["J"], *h["terms"], h["pg_norm"], vi, pd))

    res = optimize(prob, _initial_controls(cfg, prob), step0=cfg.step0, max_outer=cfg.max_outer,
                   tol_vi=cfg.tol_vi, seed=cfg.seed, state_tol=min(cfg.tol, 1e-12),
                   max_picard=cfg.max_iter, n_competitors=cfg.competitors, callback=record)
    return res, rows


def cmd_optimize(cfg, out, refine):
    prob = _problem(cfg, refine)
    res, rows = _run_optimizer(cfg, prob)
    io.write_csv(os.path.join(out, "optim_history.csv"),
                 ["iteration", "J_total", "J_rot_u", "J_u_misfit", "J_w_misfit", "J_rho_misfit",
                  "J_g1_cost_S", "J_g2_cost_S", "projected_gradient_norm_S", "vi_residual_min",
                  "projection_distance_S"], rows)
    _write_fields(out, prob, res.state, res.adjoint)
    _say(f"termination: {res.reason}; iterations {len(res.history) - 1}; J = {res.J:.10e}")
    _say(f"VI residuals {res.vi[0]:.3e}, {res.vi[1]:.3e}; projection distances "
         f"{res.projection[0]:.3e}, {res.projection[1]:.3e}")
    return EXIT_NUMERICAL if res.reason in ("state solver limited", "line search stalled") else EXIT_OK


def cmd_penalty(cfg, out, refine):
    from .penalty import penalty_path_experiment

    prob = _problem(cfg, refine)
    res, _ = _run_optimizer(cfg, prob)
    _say(f"anchor: {res.reason}; J = {res.J:.10e}")
    rep = penalty_path_experiment(prob, res.state, cfg.eps, max_nfev=cfg.max_nfev)
    rows = [(e.eps, e.dist_u, e.dist_w, e.dist_g1, e.dist_g2, e.distance, e.J_eps, e.J, e.J_anchor,
             *e.residuals, int(e.flagged)) for e in rep.entries]
    io.write_csv(os.path.join(out, "penalty_report.csv"),
                 ["eps", "dist_u_H1", "dist_w_H1", "dist_g1_S", "dist_g2_S", "dist_total",
                  "J_eps", "J", "J_anchor", "momentum_residual_dual", "rotation_residual_H-1",
                  "velocity_trace_mismatch_S", "rotation_trace_mismatch_S", "flagged"], rows)
    _write_fields(out, prob, res.state, res.adjoint)
    for e in rep.entries:
        _say(f"eps={e.eps:.3g} distance={e.distance:.6e} J_eps={e.J_eps:.10e} "
             f"sandwich={'ok' if e.sandwich else 'violated'}{' flagged' if e.flagged else ''}")
    _say(f"distances nonincreasing (10% slack): {rep.monotone()}")
    return EXIT_OK


def _problem(cfg, refine):
    mesh = load_mesh(cfg.mesh_path)
    for _ in range(cfg.refine + (refine or 0)):
        mesh = refine_uniform(mesh)
    return build_problem(cfg, mesh)


COMMANDS = {"solve": cmd_solve, "gradcheck": cmd_gradcheck, "optimize": cmd_optimize,
            "penalty": cmd_penalty}


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mpoc", description="Micropolar flow state solver and "
                                 "boundary-control optimizer.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config")
    ap.add_argument("--refine", type=int, default=None,
                    help="solve: number of levels in a refinement series; "
                         "other commands: extra uniform refinements")
    ap.add_argument("--out", default=None, help="output directory (overrides [run] out)")
    args = ap.parse_args(argv)
    try:
        if args.refine is not None and args.refine < 1 and args.command == "solve":
            raise ConfigError("--refine needs at least one level")
        cfg = load_config(args.config)
        out = args.out or cfg.out
        os.makedirs(out, exist_ok=True)
        kernels.set_threads(cfg.threads)
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](cfg, out, args.refine)
    except (SingularMatrixError, AdjointSingularError, DensityError, np.linalg.LinAlgError,
            FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"input error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, MeshError, ExpressionError, ProfileError, FluxImbalanceError,
            InfeasibleControlError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
