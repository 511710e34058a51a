"""Stiffness, surface perturbation and load assembly for P1 elements."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .mesh import Mesh
from .state_space import DofMap, assemble_mass, edge_mass_full, restrict_matrix, volume_mass_full

# interior three-point rule on triangles (exact for quadratics), barycentric
# coordinates; interior points keep region-wise sources unambiguous
TRI_QUAD_BARY = np.array([[4.0, 1.0, 1.0], [1.0, 4.0, 1.0], [1.0, 1.0, 4.0]]) / 6.0
TRI_QUAD_WEIGHTS = np.full(3, 1.0 / 3.0)
# two-point Gauss rule on edges (exact for cubics), parameter in [0, 1]
_G = 0.5 / np.sqrt(3.0)
EDGE_QUAD_POINTS = np.array([0.5 - _G, 0.5 + _G])
EDGE_QUAD_WEIGHTS = np.array([0.5, 0.5])


class CoefficientError(ValueError):
    pass


def _probe_directions(seed: int = 20240601) -> np.ndarray:
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, 16)
    rand = np.column_stack([np.cos(angles), np.sin(angles)])
    return np.vstack([np.eye(2), rand])


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Piecewise constant coefficients on one mesh.

    ``mu`` has shape (n_triangles, 2, 2); ``eps_*`` and ``b_*`` are aligned
    with ``mesh.triangles``, ``mesh.gamma_edges`` and ``mesh.sigma_edges``.
    """
    mu: np.ndarray
    eps_cell: np.ndarray
    eps_gamma: np.ndarray
    eps_sigma: np.ndarray
    b_gamma: np.ndarray
    b_sigma: np.ndarray
    mu_lower: float
    mu_upper: float

    @property
    def eps_lower(self) -> float:
        parts = [self.eps_cell, self.eps_gamma, self.eps_sigma]
        return float(min(p.min() for p in parts if p.size))

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.mu, np.swapaxes(self.mu, 1, 2), rtol=0.0, atol=0.0))

    @property
    def has_b(self) -> bool:
        return bool(np.any(self.b_gamma != 0.0) or np.any(self.b_sigma != 0.0))

    def check(self) -> list[str]:
        """Invariant violations of the declared ellipticity and norm bounds."""
        problems = []
        probes = _probe_directions()
        quad = np.einsum("pi,mij,pj->mp", probes, self.mu, probes)
        if quad.min() < self.mu_lower - 1e-12:
            problems.append(f"ellipticity {quad.min():.6g} below declared lower bound {self.mu_lower:.6g}")
        norms = np.linalg.norm(self.mu, ord=2, axis=(1, 2))
        if norms.max() > self.mu_upper + 1e-12:
            problems.append(f"norm {norms.max():.6g} above declared upper bound {self.mu_upper:.6g}")
        if self.eps_lower <= 0.0:
            problems.append("eps must be positive")
        return problems

    def transposed(self) -> "CoefficientField":
        return CoefficientField(np.swapaxes(self.mu, 1, 2).copy(), self.eps_cell, self.eps_gamma,
                                self.eps_sigma, self.b_gamma, self.b_sigma, self.mu_lower, self.mu_upper)


def _per_region(mesh: Mesh, value, shape) -> np.ndarray:
    """Broadcast a scalar/array or a {region: value} dict over the triangles."""
    if isinstance(value, dict):
        out = np.empty((mesh.n_triangles,) + shape)
        missing = set(np.unique(mesh.regions).tolist()) - set(value)
        if missing:
            raise CoefficientError(f"no value given for regions {sorted(missing)}")
        for region, v in value.items():
            out[mesh.regions == region] = _as_mu(v) if shape else float(v)
        return out
    if shape:
        return np.broadcast_to(_as_mu(value), (mesh.n_triangles,) + shape).copy()
    return np.broadcast_to(np.asarray(value, dtype=float), (mesh.n_triangles,)).copy()


def _as_mu(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(2)
    return arr.reshape(2, 2)


def make_coefficients(mesh: Mesh, mu=1.0, eps=1.0, eps_gamma=1.0, eps_sigma=1.0,
                      b_gamma=0.0, b_sigma=0.0, mu_lower=None, mu_upper=None) -> CoefficientField:
    """Build a coefficient field from scalars, arrays or per-region dicts.

    ``mu`` and ``eps`` accept ``{region: value}``; a scalar ``mu`` means a
    multiple of the identity. Missing bounds are computed: the lower bound
    from the probe set of directions, the upper bound as the largest
    spectral norm.
    """
    mu_arr = _per_region(mesh, mu, (2, 2))
    eps_cell = _per_region(mesh, eps, ())
    n_g, n_s = len(mesh.gamma_edges), len(mesh.sigma_edges)
    fields = [np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
              for v, n in ((eps_gamma, n_g), (eps_sigma, n_s), (b_gamma, n_g), (b_sigma, n_s))]
    if mu_lower is None:
        probes = _probe_directions()
        mu_lower = float(np.einsum("pi,mij,pj->mp", probes, mu_arr, probes).min())
    if mu_upper is None:
        mu_upper = float(np.linalg.norm(mu_arr, ord=2, axis=(1, 2)).max())
    coeffs = CoefficientField(mu_arr, eps_cell, *fields, float(mu_lower), float(mu_upper))
    problems = coeffs.check()
    if problems:
        raise CoefficientError("; ".join(problems))
    return coeffs


# ---------------------------------------------------------------------------

def hat_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric hats per triangle, shape (m, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    jac = np.stack([d1, d2], axis=2)                  # columns are edge vectors
    inv_t = np.linalg.inv(jac).transpose(0, 2, 1)     # J^{-T}
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.einsum("mij,kj->mki", inv_t, ref)


def element_stiffness(mesh: Mesh, mu: np.ndarray) -> np.ndarray:
    """Local matrices ``|T| (mu grad phi_j) . grad phi_i``, shape (m, 3, 3)."""
    grads = hat_gradients(mesh)
    return mesh.areas[:, None, None] * np.einsum("mia,mab,mjb->mij", grads, mu, grads)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_vertices
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_full(mesh: Mesh, mu: np.ndarray) -> sp.csr_matrix:
    return _scatter(mesh, element_stiffness(mesh, mu))


def assemble_stiffness(mesh: Mesh, dofmap: DofMap, mu) -> sp.csr_matrix:
    """Stiffness of the form ``int mu grad u . grad v`` on the free dofs."""
    if isinstance(mu, CoefficientField):
        mu = mu.mu
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (mesh.n_triangles, 2, 2))
    return restrict_matrix(stiffness_full(mesh, mu), dofmap)


def assemble_b_operator(mesh: Mesh, dofmap: DofMap, coeffs: CoefficientField,
                        lumped: bool = False) -> sp.csr_matrix:
    """Surface mass on gamma and sigma weighted by ``b``."""
    B = (edge_mass_full(mesh, mesh.gamma_edges, coeffs.b_gamma, lumped)
         + edge_mass_full(mesh, mesh.sigma_edges, coeffs.b_sigma, lumped))
    return restrict_matrix(B, dofmap)


# ---------------------------------------------------------------------------
# loads
# ---------------------------------------------------------------------------

def _eval_field(f, x, y, t, what: str) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(f(x, y, t), dtype=float), np.shape(x))
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"non-finite value of {what} at t={t}")
    return vals


def element_volume_load(mesh: Mesh, f, t: float) -> np.ndarray:
    """Per-triangle load contributions ``int_T f phi_i``, shape (m, 3)."""
    if f is None:
        return np.zeros((mesh.n_triangles, 3))
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qk,mkd->mqd", TRI_QUAD_BARY, p)
    vals = _eval_field(f, pts[..., 0], pts[..., 1], t, "volume source")
    return mesh.areas[:, None] * np.einsum("q,mq,qk->mk", TRI_QUAD_WEIGHTS, vals, TRI_QUAD_BARY)


def element_edge_load(mesh: Mesh, edges: np.ndarray, f, t: float) -> np.ndarray:
    """Per-edge load contributions ``int_e f phi_i``, shape (k, 2)."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if f is None or len(edges) == 0:
        return np.zeros((len(edges), 2))
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    s = EDGE_QUAD_POINTS
    pts = a[:, None, :] * (1.0 - s)[None, :, None] + b[:, None, :] * s[None, :, None]
    vals = _eval_field(f, pts[..., 0], pts[..., 1], t, "surface source")
    shape = np.column_stack([1.0 - s, s])              # (q, 2)
    return mesh.edge_lengths(edges)[:, None] * np.einsum("q,kq,qi->ki", EDGE_QUAD_WEIGHTS, vals, shape)


def load_full(mesh: Mesh, f_omega=None, f_gamma=None, f_sigma=None, t: float = 0.0) -> np.ndarray:
    n = mesh.n_vertices
    out = np.zeros(n)
    np.add.at(out, mesh.triangles, element_volume_load(mesh, f_omega, t))
    np.add.at(out, mesh.gamma_edges, element_edge_load(mesh, mesh.gamma_edges, f_gamma, t))
    np.add.at(out, mesh.sigma_edges, element_edge_load(mesh, mesh.sigma_edges, f_sigma, t))
    return out


def assemble_load(mesh: Mesh, dofmap: DofMap, f_omega=None, f_gamma=None, f_sigma=None,
                  t: float = 0.0) -> np.ndarray:
    """Load vector on the free dofs; each field is ``f(x, y, t)`` or None."""
    return load_full(mesh, f_omega, f_gamma, f_sigma, t)[dofmap.free]


# ---------------------------------------------------------------------------

def ellipticity_report(K: sp.spmatrix, mesh: Mesh, dofmap: DofMap, mu_lower: float,
                       n_samples: int = 200, seed: int = 0) -> dict:
    """Sampled lower bound of ``(Re t[u,u] + |Ju|^2) / |u|_{W^{1,2}}^2``.

    Random samples are supplemented, for moderate sizes, by the minimising
    generalized eigenvector, which makes the reported minimum sharp.
    """
    M = assemble_mass(mesh, dofmap)
    ones = np.ones(mesh.n_triangles)
    eye = np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2))
    W = assemble_stiffness(mesh, dofmap, eye) + restrict_matrix(volume_mass_full(mesh, ones), dofmap)
    Ksym = 0.5 * (K + K.T)
    top = (Ksym + M).tocsr()
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((dofmap.n_free, n_samples))
    if dofmap.n_free <= 2000:
        vals, vecs = la.eigh(top.toarray(), W.toarray(), subset_by_index=[0, 0])
        U = np.column_stack([U, vecs])
    ratios = np.einsum("ij,ij->j", U, top @ U) / np.einsum("ij,ij->j", U, W @ U)
    bound = min(mu_lower, 1.0)
    ratio = float(ratios.min())
    return {"ratio": ratio, "bound": bound, "passed": bool(ratio >= bound - 1e-10)}

