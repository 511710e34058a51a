"""Invariant suites run by ``dynbc check``.

Every assertion is a dict with ``suite``, ``name``, ``measured``,
``tolerance``, ``status`` ("pass", "fail" or "skipped") and, for skips, a
``reason``.
"""
from __future__ import annotations

import math

import numpy as np

from .balance import BalanceError, control_volume, global_balance_residual, subdomain_flux_balance, \
    triangles_in_box
from .linear_solver import Loads, solve_linear, uniform_grid
from .operator import MAX_DENSE, DiscreteOperator, Stepper, dense_eigen_oracle, fractional_power_apply, \
    numerical_range_probe
from .state_space import lp_norm

SUITES = ("sector", "markov", "contraction", "fractional", "balance")
NORM_EXPONENTS = (1.0, 2.0, 4.0, math.inf)


def _assert(suite, name, measured, tolerance, ok, **extra):
    return {"suite": suite, "name": name, "measured": float(measured), "tolerance": float(tolerance),
            "status": "pass" if ok else "fail", **extra}


def _skip(suite, name, reason):
    return {"suite": suite, "name": name, "measured": None, "tolerance": None, "status": "skipped",
            "reason": reason}


def check_sector(op: DiscreteOperator, n_samples: int = 2000, seed: int = 0) -> list[dict]:
    nr = numerical_range_probe(op, n_samples, seed)
    out = [_assert("sector", "min_real_part", nr.min_real, -1e-12, nr.min_real >= -1e-12),
           _assert("sector", "max_abs_arg", nr.max_abs_arg, nr.bound + 1e-8, nr.max_abs_arg <= nr.bound + 1e-8,
                   bound=nr.bound, samples=nr.n_used)]
    if op.coeffs.is_symmetric:
        out.append(_assert("sector", "max_abs_arg_symmetric", nr.max_abs_arg, 1e-10, nr.max_abs_arg <= 1e-10))
    return out


def free_runs(op: DiscreteOperator, steps: int, tau: float, seed: int):
    """Implicit Euler, lumped eps-mass, zero source from a signed and a nonnegative start."""
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(-1.0, 1.0, op.n)
    u0 /= np.abs(u0).max()
    stepper = Stepper(op, "implicit_euler", "lumped", "eps", True)
    runs = {}
    for label, start in (("signed", u0), ("nonnegative", np.abs(u0))):
        states = [start]
        for _ in range(steps):
            states.append(stepper.step(states[-1], tau))
        runs[label] = np.array(states)
    return runs


def check_markov(op: DiscreteOperator, steps: int = 50, tau: float = 0.01, seed: int = 0, runs=None) -> list[dict]:
    runs = runs or free_runs(op, steps, tau, seed)
    sup = max(float(np.abs(r).max()) for r in runs.values())
    low = float(runs["nonnegative"].min())
    return [_assert("markov", "sup_norm_bound", sup, 1.0 + 1e-12, sup <= 1.0 + 1e-12),
            _assert("markov", "positivity", low, -1e-12, low >= -1e-12)]


def norm_increase(states: np.ndarray, p: float, op: DiscreteOperator) -> float:
    """Largest per-step increase of the eps-weighted lumped p-norm."""
    m = op.mass("lumped", "eps").diagonal()
    norms = np.array([lp_norm(s, p, op.dofmap, measure=m) for s in states])
    return float(np.max(np.diff(norms))) if len(norms) > 1 else 0.0


def check_contraction(op: DiscreteOperator, steps: int = 50, tau: float = 0.01, seed: int = 0,
                      runs=None) -> list[dict]:
    runs = runs or free_runs(op, steps, tau, seed)
    out = []
    for p in NORM_EXPONENTS:
        inc = max(norm_increase(r, p, op) for r in runs.values())
        out.append(_assert("contraction", f"norm_p{p:g}_nonincreasing", inc, 1e-10, inc <= 1e-10))
    return out


def check_fractional(op: DiscreteOperator, thetas=(0.25, 0.5, 0.75), n_nodes: int = 200,
                     seed: int = 0) -> list[dict]:
    if not op.coeffs.is_symmetric:
        return [_skip("fractional", "fractional_vs_oracle", "needs a symmetric mu")]
    if op.n > MAX_DENSE:
        return [_skip("fractional", "fractional_vs_oracle", f"{op.n} dofs exceed the dense oracle limit")]
    g = np.random.default_rng(seed).standard_normal(op.n)
    spec = dense_eigen_oracle(op, "lumped")
    out = []
    for theta in thetas:
        approx = fractional_power_apply(op, theta, g, n_nodes, mass="lumped")
        exact = spec.apply(lambda lam: (lam + 1.0) ** -theta, g)
        err = lp_norm(approx - exact, 2, op.dofmap) / lp_norm(exact, 2, op.dofmap)
        out.append(_assert("fractional", f"theta_{theta:g}_relative_error", err, 1e-6, err <= 1e-6))
    return out


def check_balance(op: DiscreteOperator, loads: Loads, u0: np.ndarray, T: float = 0.1, steps: int = 20,
                  mass: str = "lumped") -> list[dict]:
    mesh = op.mesh
    if len(mesh.dirichlet_edges):
        return [_skip("balance", "global_residual", "mesh has Dirichlet edges: constants are not admissible")]
    if op.coeffs.has_b:
        return [_skip("balance", "global_residual", "b is nonzero: b u is a sink outside the balance law")]
    traj = solve_linear(op, loads, u0, uniform_grid(T, steps), mass=mass)
    res = float(np.abs(global_balance_residual(traj, loads, op)).max())
    out = [_assert("balance", "global_residual", res, 1e-11, res <= 1e-11)]

    xmid = float(np.median(mesh.vertices[:, 0]))
    u1 = triangles_in_box(mesh, -np.inf, xmid, -np.inf, np.inf)
    u2 = np.setdiff1d(np.arange(mesh.n_triangles), u1)
    if u1.size == 0 or u2.size == 0:
        return out + [_skip("balance", "additivity", "could not split the mesh in two")]
    try:
        cv1, cv2, cvall = control_volume(mesh, u1), control_volume(mesh, u2), control_volume(
            mesh, np.arange(mesh.n_triangles))
    except BalanceError as exc:
        return out + [_skip("balance", "additivity", str(exc))]
    r1, r2, rall = (subdomain_flux_balance(traj, cv, loads, op) for cv in (cv1, cv2, cvall))
    add = float(np.abs(r1.residual + r2.residual - rall.residual).max())
    whole = float(np.abs(rall.residual - global_balance_residual(traj, loads, op)).max())
    out.append(_assert("balance", "additivity", add, 1e-12, add <= 1e-12))
    out.append(_assert("balance", "whole_domain_matches_global", whole, 1e-11, whole <= 1e-11))
    anti = flux_antisymmetry(r1, r2)
    out.append(_assert("balance", "flux_antisymmetry", anti, 1e-12, anti <= 1e-12))
    return out


def flux_antisymmetry(r1, r2) -> float:
    """Largest ``|flux_1 + flux_2|`` over edges shared by two control volumes."""
    k1 = {tuple(e): i for i, e in enumerate(r1.edges.tolist())}
    worst = 0.0
    for j, e in enumerate(r2.edges.tolist()):
        i = k1.get(tuple(e))
        if i is not None:
            worst = max(worst, float(np.abs(r1.edge_flux[:, i] + r2.edge_flux[:, j]).max()))
    return worst


def summarize(results: list[dict]) -> dict:
    counts = {s: sum(r["status"] == s for r in results) for s in ("pass", "fail", "skipped")}
    return {"passed": counts["fail"] == 0, "counts": counts, "assertions": results}
