"""Command line entry point.

Subcommands::

    dynbc run <config>                      exit 0 completed, 2 early stop, 1 config error
    dynbc check <config> --suite <name>     exit 1 iff an assertion fails
    dynbc converge <config> --levels <k>
    dynbc meshgen <spec> -o <path>

Mesh specs for ``meshgen``: ``rect:NXxNY[,interface=Y][,extent=A:B][,gamma=top+left]``
or ``slit_disk:LEVEL``.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .balance import BalanceError, control_volume, subdomain_flux_balance, triangles_in_box
from .config import (ConfigError, RunConfig, build_coefficients, build_controls, build_grid, build_initial,
                     build_loads, build_mesh, build_nonlinearity, build_reaction, load_config, weighted_spec)
from .io import write_csv, write_json, write_vtk
from .kirchhoff import InversionError, solve_quasilinear
from .linear_solver import solve_linear, weighted_norm
from .manufactured import MANUFACTURED, convergence_study, jump_solution
from .mesh import SIDES, MeshError, generate_rect_mesh, generate_slit_disk, validate, write_mesh
from .operator import SolverError, build_operator
from .state_space import lp_norm

log = logging.getLogger("dynbc")

EXIT_OK, EXIT_ERROR, EXIT_EARLY = 0, 1, 2
TRAJECTORY_COLUMNS = ["step", "t", "norm_l1", "norm_l2", "norm_linf", "content", "iterations"]
LINEAR_COLUMNS = ["balance_residual"]
QUASILINEAR_COLUMNS = ["w_linf", "fixed_point_residual"]
BALANCE_COLUMNS = ["step", "storage", "boundary_flux", "interface_source", "volume_source", "residual"]
CONVERGENCE_COLUMNS = ["level", "n", "h", "dofs", "steps", "l2", "h1", "order_l2", "order_h1"]


def _outdir(cfg: RunConfig, override=None) -> Path:
    out = Path(override) if override else Path(cfg.get("output", "directory"))
    if not out.is_absolute() and cfg.source and not cfg.source.startswith("<") and not override:
        out = Path(cfg.source).parent / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(cfg: RunConfig):
    mesh = build_mesh(cfg)
    problems = validate(mesh)
    if problems:
        raise ConfigError("[mesh] invalid mesh: " + "; ".join(problems[:3]))
    op = build_operator(mesh, build_coefficients(cfg, mesh))
    return mesh, op


def _trajectory_rows(traj, op, extra=None):
    m_eps = op.mass(traj.mass, "eps")
    rows = []
    for n in range(1, traj.grid.N + 1):
        u = traj.states[n]
        row = {"step": n, "t": traj.grid.times[n], "norm_l1": lp_norm(u, 1, op.dofmap),
               "norm_l2": lp_norm(u, 2, op.dofmap), "norm_linf": lp_norm(u, np.inf, op.dofmap),
               "content": float(np.sum(m_eps @ u))}
        if extra is not None:
            row.update(extra(n))
        rows.append(row)
    return rows


def _control_volume(cfg: RunConfig, mesh):
    box = cfg.numbers("output", "control_volume")
    if not box:
        return control_volume(mesh, np.arange(mesh.n_triangles))
    if len(box) != 4:
        raise ConfigError("[output] control_volume: expected x0 x1 y0 y1")
    return control_volume(mesh, triangles_in_box(mesh, *box))


def cmd_run(cfg: RunConfig, outdir=None) -> int:
    from .plotting import plot_field, plot_series
    started = time.perf_counter()
    kind = cfg.choice("problem", "kind", ("linear", "quasilinear"))
    scheme = cfg.choice("time", "scheme", ("implicit_euler", "crank_nicolson"))
    mass = cfg.choice("time", "mass", ("lumped", "consistent"))
    mesh, op = _setup(cfg)
    grid = build_grid(cfg)
    u0 = build_initial(cfg, mesh, op.dofmap)
    out = _outdir(cfg, outdir)
    summary = {"kind": kind, "dofs": op.n, "vertices": mesh.n_vertices, "triangles": mesh.n_triangles,
               "T": grid.T, "steps_requested": grid.N, "seed": cfg.seed, "config": cfg.resolved()}
    files = ["trajectory.csv", "final.vtk", "summary.json", "norms.png", "final_u.png"]

    if kind == "linear":
        loads = build_loads(cfg)
        traj = solve_linear(op, loads, u0, grid, scheme, mass)
        u_final = op.dofmap.expand(traj.final)
        w_final = u_final
        summary.update(status="completed", reason="completed", T_star=grid.T, steps=grid.N)
        try:
            report = subdomain_flux_balance(traj, _control_volume(cfg, mesh), loads, op)
        except BalanceError as exc:
            raise ConfigError(f"[output] control_volume: {exc}") from None
        write_csv(out / "balance.csv", list(report.rows()), BALANCE_COLUMNS)
        summary["balance_max_abs_residual"] = float(np.abs(report.residual).max())
        files.append("balance.csv")
        rows = _trajectory_rows(traj, op, lambda n: {"iterations": traj.iterations[n - 1],
                                                     "balance_residual": report.residual[n - 1]})
        if grid.N >= 1:
            spec = weighted_spec(cfg)
            summary["weighted_norms"] = {"s": spec.s, "alpha": spec.alpha,
                                         "value": weighted_norm(traj, spec, "value"),
                                         "derivative": weighted_norm(traj, spec, "derivative")}
        t_star = None
    else:
        nl = build_nonlinearity(cfg)
        result = solve_quasilinear(op, nl, build_reaction(cfg), u0, grid, build_controls(cfg))
        traj = result.u
        u_final = op.dofmap.expand(traj.final)
        w_final = op.dofmap.expand(result.w.final)
        w_states = result.w.states
        rows = _trajectory_rows(traj, op, lambda n: {"w_linf": float(np.abs(w_states[n]).max()),
                                                     "iterations": result.iterations[n - 1],
                                                     "fixed_point_residual": result.residuals[n - 1]})
        summary.update(status="completed" if result.completed else "early exit", reason=result.reason,
                       T_star=result.T_star, steps=result.u.grid.N, nonlinearity=nl.name,
                       max_iterations=max(result.iterations, default=0), flagged_steps=list(result.flagged))
        t_star = None if result.completed else result.T_star

    summary["final_norms"] = {"l1": lp_norm(traj.final, 1, op.dofmap), "l2": lp_norm(traj.final, 2, op.dofmap),
                              "linf": lp_norm(traj.final, np.inf, op.dofmap)}
    summary["files"] = sorted(files)
    columns = TRAJECTORY_COLUMNS + (QUASILINEAR_COLUMNS if kind == "quasilinear" else LINEAR_COLUMNS)
    write_csv(out / "trajectory.csv", rows, columns)
    write_vtk(out / "final.vtk", mesh, {"u": u_final, "w": w_final}, f"dynbc {kind} t={traj.grid.T!r}")
    t = [r["t"] for r in rows]
    plot_series(t, {"L1": [r["norm_l1"] for r in rows], "L2": [r["norm_l2"] for r in rows],
                    "sup": [r["norm_linf"] for r in rows]}, out / "norms.png", "norm of u", marker_at=t_star)
    plot_field(mesh, u_final, out / "final_u.png", f"u at t = {traj.grid.T:.4g}")
    write_json(out / "summary.json", summary)
    write_json(out / "timing.json", {"wall_seconds": time.perf_counter() - started})
    print(f"{summary['status']}: {summary['reason']}, T* = {summary['T_star']:.6g}, "
          f"{summary['steps']} steps -> {out}")
    return EXIT_OK if summary["status"] == "completed" else EXIT_EARLY


def cmd_check(cfg: RunConfig, suite: str = "all", outdir=None) -> int:
    mesh, op = _setup(cfg)
    grid = build_grid(cfg)
    seed = cfg.seed
    steps = min(grid.N, cfg.number("check", "steps", int))
    tau = grid.T / grid.N
    suites = checks.SUITES if suite == "all" else (suite,)
    results, runs = [], None
    for name in suites:
        if name == "sector":
            results += checks.check_sector(op, cfg.number("check", "samples", int), seed)
        elif name in ("markov", "contraction"):
            runs = runs or checks.free_runs(op, steps, tau, seed)
            fn = checks.check_markov if name == "markov" else checks.check_contraction
            results += fn(op, steps, tau, seed, runs=runs)
        elif name == "fractional":
            results += checks.check_fractional(op, cfg.numbers("check", "thetas"),
                                               cfg.number("check", "nodes", int), seed)
        elif name == "balance":
            u0 = build_initial(cfg, mesh, op.dofmap)
            results += checks.check_balance(op, build_loads(cfg), u0, steps * tau, steps)
    report = checks.summarize(results)
    report.update(suite=suite, seed=seed, config=cfg.resolved())
    out = _outdir(cfg, outdir)
    write_json(out / f"check_{suite}.json", report)
    for r in results:
        detail = r.get("reason") or f"measured {r['measured']:.3e} vs {r['tolerance']:.3e}"
        print(f"{r['status'].upper():7s} {r['suite']}/{r['name']}: {detail}")
    return EXIT_OK if report["passed"] else EXIT_ERROR


def cmd_converge(cfg: RunConfig, levels: int, outdir=None) -> int:
    from .plotting import plot_convergence
    name = cfg.get("manufactured", "name")
    if not name:
        raise ConfigError("[manufactured] name is required for a convergence study")
    if name not in MANUFACTURED:
        raise ConfigError(f"[manufactured] name: {name!r} is not one of {', '.join(MANUFACTURED)}")
    if levels < 2:
        raise ConfigError("a convergence order needs at least two levels")
    exact = (jump_solution(cfg.number("manufactured", "mu_low"), cfg.number("manufactured", "mu_high"))
             if name == "jump" else MANUFACTURED[name]())
    rows = convergence_study(exact, levels, cfg.number("manufactured", "base_n", int),
                             cfg.number("manufactured", "T"),
                             cfg.choice("time", "scheme", ("implicit_euler", "crank_nicolson")),
                             cfg.choice("time", "mass", ("lumped", "consistent")),
                             cfg.number("manufactured", "tau_factor"))
    out = _outdir(cfg, outdir)
    write_csv(out / "convergence.csv", rows, CONVERGENCE_COLUMNS)
    write_json(out / "convergence.json", {"solution": name, "levels": levels, "rows": rows,
                                          "config": cfg.resolved()})
    plot_convergence(rows, out / "convergence.png")
    def fmt(order):
        return "-" if np.isnan(order) else f"{order:.2f}"

    for r in rows:
        print(f"h={r['h']:.5f}  L2={r['l2']:.3e} (order {fmt(r['order_l2'])})  "
              f"H1={r['h1']:.3e} (order {fmt(r['order_h1'])})")
    return EXIT_OK


def parse_mesh_spec(spec: str):
    """Build a mesh from a ``meshgen`` spec string; raises :class:`MeshError`."""
    kind, _, rest = spec.partition(":")
    if kind == "slit_disk":
        try:
            level = int(rest)
        except ValueError:
            raise MeshError(f"slit_disk level must be an integer, got {rest!r}") from None
        if level < 0:
            raise MeshError("slit_disk level must be nonnegative")
        return generate_slit_disk(level)
    if kind != "rect":
        raise MeshError(f"unknown mesh kind {kind!r} (use rect or slit_disk)")
    parts = [p for p in rest.split(",") if p]
    if not parts:
        raise MeshError("rect needs a size NXxNY")
    try:
        nx, ny = (int(v) for v in parts[0].lower().split("x"))
    except ValueError:
        raise MeshError(f"bad rect size {parts[0]!r}") from None
    opts = {"interface": None, "extent": (0.0, 1.0), "gamma": ()}
    for p in parts[1:]:
        key, eq, value = p.partition("=")
        try:
            if key == "interface" and eq:
                opts["interface"] = float(value)
            elif key == "extent" and eq:
                a, b = value.split(":")
                opts["extent"] = (float(a), float(b))
            elif key == "gamma" and eq:
                opts["gamma"] = tuple(s for s in value.split("+") if s)
                bad = set(opts["gamma"]) - set(SIDES)
                if bad:
                    raise MeshError(f"unknown gamma sides {sorted(bad)}")
            else:
                raise MeshError(f"unknown rect option {p!r}")
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"bad rect option {p!r}") from None
    return generate_rect_mesh(nx, ny, opts["interface"], opts["extent"], opts["gamma"])


def cmd_meshgen(spec: str, path) -> int:
    mesh = parse_mesh_spec(spec)
    write_mesh(mesh, path)
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynbc", description="Parabolic problems with dynamical boundary "
                                     "conditions and interface sources on P1 finite elements.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="linear or quasilinear run")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides [output] directory)")
    p = sub.add_parser("check", help="invariant suites")
    p.add_argument("config")
    p.add_argument("--suite", default="all", choices=checks.SUITES + ("all",))
    p.add_argument("-o", "--output")
    p = sub.add_parser("converge", help="manufactured-solution convergence study")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("-o", "--output")
    p = sub.add_parser("meshgen", help="write a generated mesh")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "meshgen":
            return cmd_meshgen(args.spec, args.output)
        cfg = load_config(args.config)
        if args.command == "run":
            return cmd_run(cfg, args.output)
        if args.command == "check":
            return cmd_check(cfg, args.suite, args.output)
        return cmd_converge(cfg, args.levels, args.output)
    except (ConfigError, MeshError, SolverError, InversionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
