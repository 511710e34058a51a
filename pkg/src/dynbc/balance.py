"""Discrete balance laws: global conservation and control-volume flux audits.

For a control volume U made of triangles, the storage of u in U (bulk plus
the gamma and sigma pieces attached to U) changes by the sources in U minus
the flux leaving through its boundary. Fluxes are rebuilt from the element
stiffness matrices: for a P1 triangle the outward conormal flux through an
edge equals ``-2 (K_T u)`` at the opposite vertex.

Sigma edges belong to the control volume holding their side-1 triangle.
Fluxes through gamma edges are zero in this bookkeeping because the gamma
dynamics is part of the storage and sources of U.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import element_edge_load, element_stiffness, element_volume_load
from .linear_solver import Loads, Trajectory
from .operator import DiscreteOperator


class BalanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControlVolume:
    triangles: np.ndarray       # sorted triangle ids
    edges: np.ndarray           # (k, 2) vertex pairs on the boundary of U
    inside: np.ndarray          # (k,) triangle of U adjacent to each boundary edge
    outside: np.ndarray         # (k,) neighbouring triangle or -1 on the mesh boundary
    kind: tuple                 # per edge: "internal", "sigma", "gamma" or "dirichlet"
    gamma_edges: np.ndarray     # indices into mesh.gamma_edges owned by U
    sigma_edges: np.ndarray     # indices into mesh.sigma_edges owned by U


def control_volume(mesh, triangles) -> ControlVolume:
    """Build the boundary and owned facets of a union of triangles."""
    tris = np.unique(np.asarray(triangles, dtype=int).ravel())
    if tris.size == 0:
        raise BalanceError("control volume is empty")
    if tris.min() < 0 or tris.max() >= mesh.n_triangles:
        raise BalanceError("control volume references a triangle outside the mesh")
    in_u = np.zeros(mesh.n_triangles, dtype=bool)
    in_u[tris] = True

    sigma_keys = {(min(a, b), max(a, b)): k for k, (a, b) in enumerate(mesh.sigma_edges.tolist())}
    bnd_tags = {(min(a, b), max(a, b)): tag for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)}
    edges, inside, outside, kind = [], [], [], []
    for key, adj in mesh.edge_triangles.items():
        owners = [t for t in adj if in_u[t]]
        if len(owners) != 1:
            continue
        t_in = owners[0]
        others = [t for t in adj if t != t_in]
        edges.append(key)
        inside.append(t_in)
        outside.append(others[0] if others else -1)
        if not others:
            kind.append(bnd_tags.get(key, "dirichlet"))
        elif key in sigma_keys:
            kind.append("sigma")
        else:
            kind.append("internal")

    gamma_owner = []
    for k, (a, b) in enumerate(mesh.gamma_edges.tolist()):
        if in_u[mesh.edge_triangles[(min(a, b), max(a, b))][0]]:
            gamma_owner.append(k)
    sigma_owner = [k for k, s in enumerate(mesh.sigma_side1.tolist()) if in_u[s]]
    return ControlVolume(tris, np.array(edges, dtype=int).reshape(-1, 2), np.array(inside, dtype=int),
                         np.array(outside, dtype=int), tuple(kind), np.array(gamma_owner, dtype=int),
                         np.array(sigma_owner, dtype=int))


def _opposite_local(mesh, tri: int, a: int, b: int) -> int:
    verts = mesh.triangles[tri].tolist()
    for k, v in enumerate(verts):
        if v != a and v != b:
            return k
    raise BalanceError(f"edge ({a}, {b}) does not belong to triangle {tri}")


def _step_data(traj: Trajectory, loads: Loads, op: DiscreteOperator):
    """Per step: time derivative, flux state and source time(s) consistent with the scheme."""
    times = traj.grid.times
    full = np.array([op.dofmap.expand(s) for s in traj.states])
    for n in range(1, traj.grid.N + 1):
        tau = times[n] - times[n - 1]
        rate = (full[n] - full[n - 1]) / tau
        if traj.scheme == "crank_nicolson":
            yield n, rate, 0.5 * (full[n] + full[n - 1]), (times[n - 1], times[n])
        else:
            yield n, rate, full[n], (times[n],)


def _lumped_pieces(op: DiscreteOperator):
    mesh, c = op.mesh, op.coeffs
    vol = (c.eps_cell * mesh.areas / 3.0)[:, None] * np.ones(3)
    gam = (c.eps_gamma * mesh.edge_lengths(mesh.gamma_edges) / 2.0)[:, None] * np.ones(2)
    sig = (c.eps_sigma * mesh.edge_lengths(mesh.sigma_edges) / 2.0)[:, None] * np.ones(2)
    return vol, gam, sig


def global_balance_residual(traj: Trajectory, loads: Loads, op: DiscreteOperator) -> np.ndarray:
    """Per-step ``d/dt <M_eps u> - <F>`` with ``<.>`` the sum of vector entries.

    Needs a mesh without Dirichlet edges (constants are admissible test
    functions) and ``b = 0``; otherwise :class:`BalanceError`.
    """
    if len(op.mesh.dirichlet_edges):
        raise BalanceError("global balance needs a mesh without Dirichlet edges")
    if op.coeffs.has_b:
        raise BalanceError("global balance needs b = 0: b u is a sink outside the balance law")
    M = op.mass(traj.mass, "eps")
    content = np.array([np.sum(M @ s) for s in traj.states])
    out = []
    for n, _, _, src_times in _step_data(traj, loads, op):
        tau = traj.grid.times[n] - traj.grid.times[n - 1]
        source = np.mean([np.sum(loads.vector(op, t)) for t in src_times])
        out.append((content[n] - content[n - 1]) / tau - source)
    return np.array(out)


@dataclass(frozen=True, eq=False)
class BalanceReport:
    storage: np.ndarray
    boundary_flux: np.ndarray
    interface_source: np.ndarray
    volume_source: np.ndarray      # domain and gamma sources, minus the b sink
    residual: np.ndarray
    edge_flux: np.ndarray          # (N, k) outward flux per boundary edge of U
    edges: np.ndarray

    def rows(self):
        for n in range(len(self.storage)):
            yield {"step": n + 1, "storage": self.storage[n], "boundary_flux": self.boundary_flux[n],
                   "interface_source": self.interface_source[n], "volume_source": self.volume_source[n],
                   "residual": self.residual[n]}


def subdomain_flux_balance(traj: Trajectory, cv: ControlVolume, loads: Loads,
                           op: DiscreteOperator) -> BalanceReport:
    """Storage rate + outward flux - sources over the control volume, per step."""
    mesh, c = op.mesh, op.coeffs
    kloc = element_stiffness(mesh, c.mu)
    vol_w, gam_w, sig_w = _lumped_pieces(op)
    tri_u = mesh.triangles[cv.triangles]
    g_edges = mesh.gamma_edges[cv.gamma_edges]
    s_edges = mesh.sigma_edges[cv.sigma_edges]
    side1 = set(mesh.sigma_side1.tolist())

    # per boundary edge: (triangle, opposite local vertex, weight) terms; the flux
    # leaving triangle T through edge e is 2 (K_T u) at the vertex opposite e
    plan = []
    for (a, b), t_in, t_out, kind in zip(cv.edges.tolist(), cv.inside.tolist(), cv.outside.tolist(), cv.kind):
        if kind == "gamma":
            plan.append(())
        elif kind == "dirichlet":
            plan.append(((t_in, _opposite_local(mesh, t_in, a, b), 2.0),))
        elif kind == "sigma":
            if t_in in side1 and _is_side1_of(mesh, t_in, a, b):
                # sigma storage is inside: the flux leaves through the side-2 element
                plan.append(((t_out, _opposite_local(mesh, t_out, a, b), -2.0),))
            else:
                plan.append(((t_in, _opposite_local(mesh, t_in, a, b), 2.0),))
        else:
            plan.append(((t_in, _opposite_local(mesh, t_in, a, b), 1.0),
                         (t_out, _opposite_local(mesh, t_out, a, b), -1.0)))

    storage, flux, src_if, src_vol, edge_flux = [], [], [], [], []
    b_g = c.b_gamma[cv.gamma_edges] * mesh.edge_lengths(g_edges) / 2.0
    b_s = c.b_sigma[cv.sigma_edges] * mesh.edge_lengths(s_edges) / 2.0
    for n, rate, state, src_times in _step_data(traj, loads, op):
        st = (np.sum(vol_w[cv.triangles] * rate[tri_u]) + np.sum(gam_w[cv.gamma_edges] * rate[g_edges])
              + np.sum(sig_w[cv.sigma_edges] * rate[s_edges]))
        ef = np.zeros(len(plan))
        for k, terms in enumerate(plan):
            for tri, loc, coef in terms:
                ef[k] += coef * float(kloc[tri, loc] @ state[mesh.triangles[tri]])
        vs, isrc = 0.0, 0.0
        for t in src_times:
            vs += np.sum(element_volume_load(mesh, loads.f_omega, t)[cv.triangles])
            vs += np.sum(element_edge_load(mesh, g_edges, loads.f_gamma, t))
            isrc += np.sum(element_edge_load(mesh, s_edges, loads.f_sigma, t))
        vs /= len(src_times)
        isrc /= len(src_times)
        vs -= np.sum(b_g * state[g_edges].sum(axis=1)) + np.sum(b_s * state[s_edges].sum(axis=1))
        storage.append(st)
        flux.append(ef.sum())
        src_if.append(isrc)
        src_vol.append(vs)
        edge_flux.append(ef)
    storage, flux = np.array(storage), np.array(flux)
    src_if, src_vol = np.array(src_if), np.array(src_vol)
    return BalanceReport(storage, flux, src_if, src_vol, storage + flux - src_if - src_vol,
                         np.array(edge_flux).reshape(len(storage), -1), cv.edges)


def _is_side1_of(mesh, tri: int, a: int, b: int) -> bool:
    key = (min(a, b), max(a, b))
    for (p, q), s in zip(mesh.sigma_edges.tolist(), mesh.sigma_side1.tolist()):
        if (min(p, q), max(p, q)) == key:
            return s == tri
    return False


def triangles_in_box(mesh, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    """Triangles whose centroid lies in the closed box."""
    c = mesh.centroids
    return np.flatnonzero((c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1))
