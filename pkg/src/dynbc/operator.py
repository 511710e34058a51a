"""Discrete generator: resolvents, semigroup steps and spectral probes.

The generator acts through the pair (K + B, M): ``A = M^{-1} (K + B)`` with
M one of the consistent or lumped masses, optionally epsilon-weighted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import CoefficientField, assemble_b_operator, assemble_stiffness
from .mesh import Mesh
from .state_space import DofMap, assemble_mass, build_dofmap

RESIDUAL_TOL = 1e-10
MASSES = ("consistent", "lumped")
WEIGHTS = ("unit", "eps")
SCHEMES = ("implicit_euler", "crank_nicolson")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    mesh: Mesh
    dofmap: DofMap
    coeffs: CoefficientField
    K: sp.csr_matrix
    B: sp.csr_matrix
    B_lumped: sp.csr_matrix
    masses: dict = field(repr=False)

    @property
    def n(self) -> int:
        return self.dofmap.n_free

    @property
    def mu_lower(self) -> float:
        return self.coeffs.mu_lower

    @property
    def mu_upper(self) -> float:
        return self.coeffs.mu_upper

    def mass(self, kind: str = "consistent", weight: str = "unit") -> sp.csr_matrix:
        if kind not in MASSES or weight not in WEIGHTS:
            raise ValueError(f"unknown mass {kind!r}/{weight!r}")
        return self.masses[kind, weight]

    def b_matrix(self, kind: str = "consistent") -> sp.csr_matrix:
        # the lumped B goes with lumped masses so M-matrix structure survives
        return self.B_lumped if kind == "lumped" else self.B

    def generator(self, kind: str = "consistent", include_B: bool = True) -> sp.csr_matrix:
        return (self.K + self.b_matrix(kind)).tocsr() if include_B else self.K


def build_operator(mesh: Mesh, coeffs: CoefficientField, dofmap: DofMap | None = None) -> DiscreteOperator:
    dofmap = build_dofmap(mesh) if dofmap is None else dofmap
    K = assemble_stiffness(mesh, dofmap, coeffs.mu)
    masses = {}
    for kind in MASSES:
        lumped = kind == "lumped"
        masses[kind, "unit"] = assemble_mass(mesh, dofmap, lumped=lumped)
        masses[kind, "eps"] = assemble_mass(mesh, dofmap, coeffs.eps_cell, coeffs.eps_gamma,
                                            coeffs.eps_sigma, lumped=lumped)
    return DiscreteOperator(mesh, dofmap, coeffs, K,
                            assemble_b_operator(mesh, dofmap, coeffs),
                            assemble_b_operator(mesh, dofmap, coeffs, lumped=True), masses)


def _factorize(A: sp.spmatrix, context: str):
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # singular factor
        raise SolverError(f"{context}: {exc}") from None
    return lu


def _checked_solve(lu, A, rhs, context: str) -> np.ndarray:
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{context}: non-finite solution")
    scale = np.linalg.norm(rhs)
    if scale > 0.0:
        res = np.linalg.norm(A @ x - rhs) / scale
        if res > RESIDUAL_TOL:
            raise SolverError(f"{context}: relative residual {res:.3e} above {RESIDUAL_TOL:g}")
    return x


def resolvent_apply(op: DiscreteOperator, lam: float, g: np.ndarray, include_B: bool = False,
                    mass: str = "consistent", weight: str = "unit") -> np.ndarray:
    """Solve ``(K [+ B] + lam M) x = M g``."""
    if lam <= 0.0:
        raise ValueError("the resolvent shift must be positive")
    M = op.mass(mass, weight)
    A = (op.generator(mass, include_B) + lam * M).tocsc()
    ctx = f"resolvent at lambda={lam:g}"
    return _checked_solve(_factorize(A, ctx), A, M @ np.asarray(g, dtype=float), ctx)


class Stepper:
    """Time stepper for ``M_w u' + (K + B) u = F`` caching one LU per step size."""

    def __init__(self, op: DiscreteOperator, scheme: str = "implicit_euler", mass: str = "lumped",
                 weight: str = "unit", include_B: bool = True):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.op = op
        self.scheme = scheme
        self.M = op.mass(mass, weight)
        self.A = op.generator(mass, include_B)
        self._cache: dict = {}

    def _system(self, tau: float):
        key = float(tau)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            theta = 1.0 if self.scheme == "implicit_euler" else 0.5
            lhs = (self.M + theta * tau * self.A).tocsc()
            self._cache[key] = (lhs, _factorize(lhs, f"step with tau={tau:g}"))
        return self._cache[key]

    def step(self, u: np.ndarray, tau: float, load_new=None, load_old=None) -> np.ndarray:
        if tau <= 0.0:
            raise ValueError("time step must be positive")
        lhs, lu = self._system(tau)
        if self.scheme == "implicit_euler":
            rhs = self.M @ u
            if load_new is not None:
                rhs = rhs + tau * load_new
        else:
            rhs = self.M @ u - 0.5 * tau * (self.A @ u)
            if load_new is not None:
                rhs = rhs + 0.5 * tau * (load_new + (load_new if load_old is None else load_old))
        return _checked_solve(lu, lhs, rhs, f"step with tau={tau:g}")


def semigroup_step(op: DiscreteOperator, w: np.ndarray, tau: float, scheme: str = "implicit_euler",
                   mass: str = "lumped", weight: str = "unit", include_B: bool = True) -> np.ndarray:
    """One step of the homogeneous evolution."""
    return Stepper(op, scheme, mass, weight, include_B).step(np.asarray(w, dtype=float), tau)


# ---------------------------------------------------------------------------
# numerical range
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericalRange:
    max_abs_arg: float
    min_real: float       # smallest Re z / |phi|^2
    bound: float          # arctan(mu_upper / mu_lower)
    n_used: int


def numerical_range_probe(op: DiscreteOperator, n_samples: int = 10_000, seed: int = 0,
                          batch: int = 500) -> NumericalRange:
    """Sample ``z = phi* K phi`` for random complex ``phi`` and record its argument."""
    rng = np.random.default_rng(seed)
    K = op.K
    max_arg, min_re, used, done = 0.0, math.inf, 0, 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        U = rng.standard_normal((op.n, b))
        V = rng.standard_normal((op.n, b))
        KU, KV = K @ U, K @ V
        re = np.einsum("ij,ij->j", U, KU) + np.einsum("ij,ij->j", V, KV)
        im = np.einsum("ij,ij->j", U, KV) - np.einsum("ij,ij->j", V, KU)
        norm2 = np.einsum("ij,ij->j", U, U) + np.einsum("ij,ij->j", V, V)
        keep = np.hypot(re, im) > 1e-14
        if keep.any():
            max_arg = max(max_arg, float(np.abs(np.arctan2(im[keep], re[keep])).max()))
            min_re = min(min_re, float((re[keep] / norm2[keep]).min()))
            used += int(keep.sum())
        done += b
    return NumericalRange(max_arg, min_re, math.atan(op.mu_upper / op.mu_lower), used)


# ---------------------------------------------------------------------------
# fractional powers
# ---------------------------------------------------------------------------

FRACTIONAL_HALF_WIDTH = math.log(1e8)


def fractional_power_apply(op: DiscreteOperator, theta: float, g: np.ndarray, n_nodes: int = 200,
                           mass: str = "consistent", weight: str = "unit",
                           include_B: bool = False) -> np.ndarray:
    """Approximate ``(A + 1)^{-theta} g`` by the resolvent integral.

    With ``t = e^y`` the integral becomes
    ``sin(pi theta)/pi * int e^{(1-theta) y} (A + 1 + e^y)^{-1} g dy``,
    integrated by composite Gauss-Legendre on ``|y| <= ln 1e8``. The two
    truncated tails are added in closed form from their expansions:
    ``(A+1)^{-1} g e^{-(1-theta) L} / (1-theta)`` below and
    ``g e^{-theta L} / theta - (A+1) g e^{-(1+theta) L} / (1+theta)`` above.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    g = np.asarray(g, dtype=float)
    L = FRACTIONAL_HALF_WIDTH
    per_panel = 10
    n_panels = max(1, n_nodes // per_panel)
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(-L, L, n_panels + 1)
    ys, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ys.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    ys, ws = np.concatenate(ys), np.concatenate(ws)

    acc = np.zeros_like(g)
    for y, wy in zip(ys, ws):
        acc += wy * math.exp((1.0 - theta) * y) * resolvent_apply(
            op, 1.0 + math.exp(y), g, include_B, mass, weight)
    acc += math.exp(-(1.0 - theta) * L) / (1.0 - theta) * resolvent_apply(
        op, 1.0, g, include_B, mass, weight)
    acc += math.exp(-theta * L) / theta * g
    M = op.mass(mass, weight)
    shifted = spla.spsolve(M.tocsc(), op.generator(mass, include_B) @ g) + g
    acc -= math.exp(-(1.0 + theta) * L) / (1.0 + theta) * shifted
    return math.sin(math.pi * theta) / math.pi * acc


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------

MAX_DENSE = 2000


@dataclass(frozen=True, eq=False)
class SpectralFactorization:
    values: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray     # V^{-1}, equal to V^T M in the symmetric case
    symmetric: bool
    residual: float

    def apply(self, fn, g: np.ndarray) -> np.ndarray:
        """``V fn(Lambda) V^{-1} g``."""
        out = self.vectors @ (fn(self.values) * (self.inverse @ g))
        return out.real if self.symmetric or np.allclose(out.imag, 0.0, atol=1e-12) else out


def dense_eigen_oracle(op: DiscreteOperator, mass: str = "consistent", weight: str = "unit",
                       include_B: bool = False) -> SpectralFactorization:
    """Generalized eigendecomposition of ``K x = lambda M x`` by dense LAPACK."""
    if op.n > MAX_DENSE:
        raise ValueError(f"{op.n} free dofs exceed the dense oracle limit {MAX_DENSE}")
    K = op.generator(mass, include_B).toarray()
    M = op.mass(mass, weight).toarray()
    symmetric = np.array_equal(K, K.T)
    try:
        if symmetric:
            vals, vecs = la.eigh(K, M)
            inverse = vecs.T @ M
        else:
            vals, vecs = la.eig(K, M)
            inverse = la.inv(vecs)
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"dense eigendecomposition failed: {exc}") from None
    residual = float(np.linalg.norm(K @ vecs - M @ vecs * vals) / max(np.linalg.norm(K), 1e-300))
    if residual > 1e-8:
        raise SolverError(f"eigendecomposition residual {residual:.3e}")
    return SpectralFactorization(vals, vecs, inverse, symmetric, residual)


# ---------------------------------------------------------------------------
# ultracontractivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UltraProbe:
    t: tuple
    p: float = 1.0
    q: float = math.inf
    beta: float | None = None
    omega: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.size == 0 or np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
            raise ValueError("t samples must be positive and strictly increasing")
        if (self.p, self.q) != (1.0, math.inf):
            raise ValueError("only the 1 -> inf norm is estimated")


@dataclass(frozen=True)
class UltraTable:
    t: np.ndarray
    norm: np.ndarray
    slope: float


def ultracontractivity_probe(op: DiscreteOperator, probe: UltraProbe, substeps: int = 20,
                             include_B: bool = True) -> UltraTable:
    """Estimate ``|S_t|_{1->inf}`` from all nodal deltas normalized in lumped L^1."""
    mass = op.mass("lumped")
    m = mass.diagonal()
    stepper = Stepper(op, "implicit_euler", "lumped", "unit", include_B)
    t_samples = np.asarray(probe.t, dtype=float)
    tau_max = t_samples[0] / substeps
    state = np.diag(1.0 / m)
    norms, now = [], 0.0
    for t in t_samples:
        n_sub = max(1, int(math.ceil((t - now) / tau_max - 1e-12)))
        tau = (t - now) / n_sub
        for _ in range(n_sub):
            state = stepper.step(state, tau)
        now = t
        norms.append(float(np.abs(state).max()))
    norms = np.array(norms)
    slope = float(np.polyfit(np.log(t_samples), np.log(norms), 1)[0]) if len(t_samples) > 1 else math.nan
    return UltraTable(t_samples, norms, slope)
