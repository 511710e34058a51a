"""Discrete state space: bulk plus surface measure on one nodal vector.

In conforming P1 the nodal vector carries both the volume values and the
traces on gamma and sigma, so a state function is a plain array over the
free degrees of freedom. The surface part only shows up in the weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

# element mass patterns for P1 on triangles and on edges
_TRI_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass(frozen=True, eq=False)
class DofMap:
    free: np.ndarray            # vertex ids carrying unknowns
    dirichlet: np.ndarray       # vertex ids pinned to zero
    vol_weight: np.ndarray      # per vertex, integral of the hat function over the domain
    gamma_weight: np.ndarray    # per vertex, integral of the hat trace over gamma
    sigma_weight: np.ndarray    # per vertex, integral of the hat trace over sigma
    n_vertices: int

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def surf_weight(self) -> np.ndarray:
        return self.gamma_weight + self.sigma_weight

    @property
    def free_measure(self) -> np.ndarray:
        """Lumped weights of dx + drho restricted to the free nodes."""
        return (self.vol_weight + self.surf_weight)[self.free]

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Free-dof vector -> full vertex vector with zeros on Dirichlet nodes."""
        full = np.zeros(self.n_vertices, dtype=np.result_type(u, float))
        full[self.free] = u
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.free]


def _as_weights(value, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


def edge_mass_full(mesh: Mesh, edges: np.ndarray, weight, lumped: bool = False) -> sp.csr_matrix:
    """Weighted P1 edge mass over all vertices."""
    n = mesh.n_vertices
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    w = _as_weights(weight, len(edges)) * mesh.edge_lengths(edges)
    pattern = np.diag(_EDGE_MASS.sum(axis=1)) if lumped else _EDGE_MASS
    vals = w[:, None, None] * pattern[None]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def volume_mass_full(mesh: Mesh, weight, lumped: bool = False) -> sp.csr_matrix:
    n = mesh.n_vertices
    w = _as_weights(weight, mesh.n_triangles) * mesh.areas
    pattern = np.diag(_TRI_MASS.sum(axis=1)) if lumped else _TRI_MASS
    vals = w[:, None, None] * pattern[None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def build_dofmap(mesh: Mesh) -> DofMap:
    n = mesh.n_vertices
    dirichlet = mesh.dirichlet_nodes
    is_free = np.ones(n, dtype=bool)
    is_free[dirichlet] = False
    vol = np.asarray(volume_mass_full(mesh, 1.0).sum(axis=1)).ravel()
    gam = np.asarray(edge_mass_full(mesh, mesh.gamma_edges, 1.0).sum(axis=1)).ravel()
    sig = np.asarray(edge_mass_full(mesh, mesh.sigma_edges, 1.0).sum(axis=1)).ravel()
    return DofMap(np.flatnonzero(is_free), np.asarray(dirichlet, dtype=int), vol, gam, sig, n)


def restrict_matrix(A: sp.spmatrix, dofmap: DofMap) -> sp.csr_matrix:
    """Dirichlet elimination by deleting the pinned rows and columns."""
    A = sp.csr_matrix(A)
    return A[dofmap.free][:, dofmap.free].tocsr()


def assemble_mass(mesh: Mesh, dofmap: DofMap, cell_weight=1.0, gamma_weight=1.0,
                  sigma_weight=1.0, lumped: bool = False) -> sp.csr_matrix:
    """Weighted mass of the measure dx + drho on the free dofs.

    Weights are scalars or arrays aligned with ``mesh.triangles``,
    ``mesh.gamma_edges`` and ``mesh.sigma_edges``; all must be positive.
    With ``lumped`` the row sums are put on the diagonal.
    """
    for value, name in ((cell_weight, "cell"), (gamma_weight, "gamma"), (sigma_weight, "sigma")):
        if np.any(np.asarray(value, dtype=float) <= 0.0):
            raise ValueError(f"{name} weight must be positive")
    M = (volume_mass_full(mesh, cell_weight, lumped)
         + edge_mass_full(mesh, mesh.gamma_edges, gamma_weight, lumped)
         + edge_mass_full(mesh, mesh.sigma_edges, sigma_weight, lumped))
    return restrict_matrix(M, dofmap)


def lp_norm(u: np.ndarray, p: float, dofmap: DofMap, varsigma=None, measure=None) -> float:
    """Lumped-quadrature norm in the space weighted by ``varsigma**-1 (dx + drho)``.

    ``measure`` overrides the nodal weights of dx + drho (for instance with
    the diagonal of an epsilon-weighted lumped mass).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    u = np.abs(np.asarray(u, dtype=float))
    if np.isinf(p):
        return float(u.max()) if u.size else 0.0
    w = dofmap.free_measure if measure is None else np.asarray(measure, dtype=float)
    if varsigma is not None:
        w = w / np.asarray(varsigma, dtype=float)
    scale = float(u.max()) if u.size else 0.0
    if scale == 0.0:
        return 0.0
    # scale by the sup norm so |u|^p neither underflows nor overflows
    return scale * float(np.sum(w * (u / scale) ** p) ** (1.0 / p))


def interp(f, mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    """Nodal interpolant of ``f(x, y)`` on the free dofs."""
    xy = mesh.vertices[dofmap.free]
    vals = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (len(xy),)).copy()
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"non-finite sample at vertex {int(dofmap.free[bad])}")
    return vals
