"""Kirchhoff transform and the frozen-coefficient quasilinear solver.

With ``w = K(u) = int_0^u a`` the problem
``eps d_t b(u) - div(mu a(u) grad u) = F(t, u)`` (with matching dynamics on
gamma and sigma) becomes ``d_t w + eta(w) A w = eta(w) F(t, K^{-1}(w))`` where
``eta(w) = (a / b')(K^{-1}(w)) / eps``. Each step freezes the nodal weights
``1/eta`` into a lumped mass and solves one linear system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate as integrate
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from .linear_solver import TimeGrid, Trajectory
from .operator import DiscreteOperator

log = logging.getLogger(__name__)


class InversionError(ValueError):
    """Target outside the range of the transform on the working interval."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


# ---------------------------------------------------------------------------
# Fermi-Dirac integrals
# ---------------------------------------------------------------------------

# fixed composite Gauss-Legendre rule on [0, 1]: 60 panels of 10 nodes (round-off accurate)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_FD_PANELS = 60
_FD_T = ((np.arange(_FD_PANELS)[:, None] + 0.5 * (_GL_X[None] + 1.0)) / _FD_PANELS).ravel()
_FD_W = np.tile(_GL_W / (2.0 * _FD_PANELS), _FD_PANELS)


def _fd_integral(s, even: bool) -> np.ndarray:
    """``int_0^inf x^{+-1/2} / (1 + e^{x - s}) dx`` for an array of ``s``.

    With ``x = z^2`` both integrands are smooth; the integrand is below
    ``e^{-45}`` of its peak beyond ``z^2 = max(s, 0) + 45``.
    """
    s = np.asarray(s, dtype=float)
    Z = np.sqrt(np.maximum(s, 0.0) + 45.0)
    z = Z[..., None] * _FD_T
    f = expit(s[..., None] - z * z)
    if even:
        f = f * z * z
    return 2.0 * Z * np.sum(_FD_W * f, axis=-1)


def fermi_dirac(s) -> np.ndarray | float:
    """Complete Fermi-Dirac integral of order 1/2 for ``s`` in [-50, 50]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.abs(s_arr) > 50.0):
        raise ValueError("argument outside [-50, 50]")
    out = 2.0 / math.sqrt(math.pi) * _fd_integral(s_arr, True)
    return float(out) if out.ndim == 0 else out


def fermi_dirac_minus_half(s) -> np.ndarray | float:
    """Derivative of :func:`fermi_dirac` (the order -1/2 integral)."""
    s_arr = np.asarray(s, dtype=float)
    out = 1.0 / math.sqrt(math.pi) * _fd_integral(s_arr, False)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Diffusion factor ``a`` and storage function ``b`` with derivatives.

    ``antiderivative`` is an optional closed form of the Kirchhoff transform;
    without it the transform is integrated adaptively.
    """
    name: str
    a: object
    b: object
    db: object
    d2b: object = None
    antiderivative: object = None
    x_max: float = 50.0

    def check(self, n: int = 2001) -> list[str]:
        """Positivity of ``a`` and ``b'`` and a central-difference test of ``b'``."""
        xs = np.linspace(-self.x_max, self.x_max, n)
        problems = []
        if np.any(np.asarray(self.a(xs)) <= 0.0):
            problems.append("a is not positive on the working interval")
        if np.any(np.asarray(self.db(xs)) <= 0.0):
            problems.append("b' is not positive on the working interval")
        return problems

    def derivative_defect(self, xs, h: float = 1e-4) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        fd = (np.asarray(self.b(xs + h)) - np.asarray(self.b(xs - h))) / (2.0 * h)
        return np.abs(fd - np.asarray(self.db(xs)))


def identity(x_max: float = 50.0) -> Nonlinearity:
    return Nonlinearity("identity", a=lambda x: np.ones_like(np.asarray(x, float)),
                        b=lambda x: np.asarray(x, float), db=lambda x: np.ones_like(np.asarray(x, float)),
                        d2b=lambda x: np.zeros_like(np.asarray(x, float)),
                        antiderivative=lambda x: np.asarray(x, float), x_max=x_max)


def power(eta: float = 1.0, m: float = 2.0, x_max: float = 50.0) -> Nonlinearity:
    """``a(u) = eta + |u|^m`` with ``b`` the identity."""
    if eta <= 0.0 or m < 1.0:
        raise ValueError("power nonlinearity needs eta > 0 and m >= 1")

    def a(x):
        return eta + np.abs(np.asarray(x, float)) ** m

    def K(x):
        x = np.asarray(x, float)
        return eta * x + np.sign(x) * np.abs(x) ** (m + 1.0) / (m + 1.0)

    ident = identity()
    return Nonlinearity(f"power({eta:g},{m:g})", a, ident.b, ident.db, ident.d2b, K, x_max)


def exponential(x_max: float = 50.0) -> Nonlinearity:
    """``a = exp`` with ``b`` the identity; ``K(u) = e^u - 1``."""
    ident = identity()
    return Nonlinearity("exp", lambda x: np.exp(np.asarray(x, float)), ident.b, ident.db, ident.d2b,
                        lambda x: np.expm1(np.asarray(x, float)), x_max)


def phase_separation(a, b, db, d2b=None, x_max: float = 50.0, name: str = "a=b'") -> Nonlinearity:
    """Nonlinearity with ``a = b'``, for which eta no longer depends on w."""
    return Nonlinearity(name, a, b, db, d2b, None, x_max)


def fermi_dirac_b(x_max: float = 50.0) -> Nonlinearity:
    """``b = F_{1/2}`` and ``a = b' = F_{-1/2}``."""
    return Nonlinearity("fermi_dirac_b", fermi_dirac_minus_half, fermi_dirac, fermi_dirac_minus_half,
                        None, lambda x: fermi_dirac(x) - fermi_dirac(0.0), x_max)


NAMED = {"identity": identity, "power": power, "exp": exponential, "fermi_dirac_b": fermi_dirac_b}


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------

def kirchhoff(nl: Nonlinearity, xi):
    """``K(xi) = int_0^xi a`` on the working interval."""
    x = np.asarray(xi, dtype=float)
    if np.any(np.abs(x) > nl.x_max):
        raise ValueError(f"argument outside the working interval [-{nl.x_max:g}, {nl.x_max:g}]")
    if nl.antiderivative is not None:
        out = np.asarray(nl.antiderivative(x), dtype=float)
    else:
        out = np.vectorize(lambda v: 0.0 if v == 0.0 else integrate.quad(
            lambda z: float(nl.a(z)), 0.0, v, epsabs=1e-12, epsrel=1e-13, limit=200)[0])(x)
    out = np.where(x == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def kirchhoff_inverse(nl: Nonlinearity, y, tol: float = 1e-13, max_iter: int = 200):
    """Invert the transform by safeguarded Newton inside a shrinking bracket.

    Raises :class:`InversionError` for targets outside
    ``[K(-x_max), K(x_max)]``; the error carries the first offending index.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    lo_val, hi_val = kirchhoff(nl, -nl.x_max), kirchhoff(nl, nl.x_max)
    bad = np.flatnonzero(~((y_arr >= lo_val) & (y_arr <= hi_val)))
    if bad.size:
        i = int(bad[0])
        raise InversionError(f"target {y_arr[i]:.6g} outside attainable range "
                             f"[{lo_val:.6g}, {hi_val:.6g}]", index=i)
    lo = np.full_like(y_arr, -nl.x_max)
    hi = np.full_like(y_arr, nl.x_max)
    x = np.clip(y_arr / np.asarray(nl.a(np.zeros_like(y_arr)), float), lo, hi)
    done = y_arr == 0.0
    x[done] = 0.0
    for _ in range(max_iter):
        active = ~done
        if not active.any():
            break
        xa = x[active]
        r = np.asarray(kirchhoff(nl, xa), float) - y_arr[active]
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(r < 0.0, xa, lo_a)
        hi_a = np.where(r > 0.0, xa, hi_a)
        dx = r / np.asarray(nl.a(xa), float)
        step = xa - dx
        # stop on the Newton increment: where a is small a tiny residual is a large error in xi
        conv = (r == 0.0) | (np.abs(dx) <= tol * (1.0 + np.abs(xa)))
        outside = ~((step > lo_a) & (step < hi_a)) | ~np.isfinite(step)
        conv &= ~outside | (r == 0.0)
        step = np.where(outside, 0.5 * (lo_a + hi_a), step)
        idx = np.flatnonzero(active)
        lo[idx], hi[idx] = lo_a, hi_a
        x[idx] = np.where(r == 0.0, xa, step)
        done[idx[conv]] = True
        # bracket collapsed to rounding level
        tiny = (hi - lo) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))
        done |= tiny
    out = x
    return float(out[0]) if np.ndim(y) == 0 else out


def eta(nl: Nonlinearity, eps_node, w):
    """``(a / b')(K^{-1}(w)) / eps``."""
    xi = kirchhoff_inverse(nl, w)
    return np.asarray(nl.a(xi), float) / np.asarray(nl.db(xi), float) / np.asarray(eps_node, float)


# ---------------------------------------------------------------------------
# reactions
# ---------------------------------------------------------------------------

def _zero_reaction(t, xi):
    return np.zeros_like(np.asarray(xi, float))


@dataclass(frozen=True)
class ReactionSpec:
    """Reaction terms ``F(t, xi)`` on the domain, gamma and sigma.

    ``lipschitz`` maps a bound M to the modulus ``r_M(t)``; it is only used
    by :meth:`check_lipschitz`.
    """
    f_omega: object = _zero_reaction
    f_gamma: object = _zero_reaction
    f_sigma: object = _zero_reaction
    lipschitz: object = None

    def parts(self):
        return (("omega", self.f_omega), ("gamma", self.f_gamma), ("sigma", self.f_sigma))

    def check_lipschitz(self, bound: float, t: float = 0.0, n: int = 1000, seed: int = 0) -> list[str]:
        if self.lipschitz is None:
            return []
        rng = np.random.default_rng(seed)
        x1 = rng.uniform(-bound, bound, n)
        x2 = rng.uniform(-bound, bound, n)
        r = float(self.lipschitz(bound, t) if callable(self.lipschitz) else self.lipschitz[bound])
        problems = []
        for name, f in self.parts():
            lhs = np.abs(np.asarray(f(t, x1), float) - np.asarray(f(t, x2), float))
            if np.any(lhs > r * np.abs(x1 - x2) * (1.0 + 1e-12) + 1e-14):
                problems.append(f"{name} reaction violates the Lipschitz bound {r:g} for |xi| <= {bound:g}")
        return problems


@dataclass(frozen=True)
class NodalWeights:
    """Per-part lumped measures and nodal eps on the free dofs."""
    volume: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    eps_volume: np.ndarray
    eps_gamma: np.ndarray
    eps_sigma: np.ndarray

    def parts(self):
        return (("omega", self.volume, self.eps_volume), ("gamma", self.gamma, self.eps_gamma),
                ("sigma", self.sigma, self.eps_sigma))


def nodal_weights(op: DiscreteOperator) -> NodalWeights:
    """Split the lumped eps-weighted mass into its three parts per node.

    The nodal eps of a part is its eps-weighted lumped measure divided by the
    unweighted one (1 where the part has no measure).
    """
    from .state_space import edge_mass_full, volume_mass_full
    mesh, dm, c = op.mesh, op.dofmap, op.coeffs

    def diag(M):
        return np.asarray(M.sum(axis=1)).ravel()[dm.free]

    out = []
    for unit, weighted in (
        (volume_mass_full(mesh, 1.0, True), volume_mass_full(mesh, c.eps_cell, True)),
        (edge_mass_full(mesh, mesh.gamma_edges, 1.0, True), edge_mass_full(mesh, mesh.gamma_edges, c.eps_gamma, True)),
        (edge_mass_full(mesh, mesh.sigma_edges, 1.0, True), edge_mass_full(mesh, mesh.sigma_edges, c.eps_sigma, True)),
    ):
        m, me = diag(unit), diag(weighted)
        eps = np.divide(me, m, out=np.ones_like(m), where=m > 0)
        out.append((m, eps))
    return NodalWeights(out[0][0], out[1][0], out[2][0], out[0][1], out[1][1], out[2][1])


@dataclass(frozen=True)
class Reaction:
    """Nodal values of ``eta F(t, K^{-1} w)`` per part, with their etas."""
    omega: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    eta_omega: np.ndarray
    eta_gamma: np.ndarray
    eta_sigma: np.ndarray

    def load(self, weights: NodalWeights) -> np.ndarray:
        """Lumped pairing: domain, gamma and sigma measures times the nodal values."""
        return weights.volume * self.omega + weights.gamma * self.gamma + weights.sigma * self.sigma

    def weighted_load(self, weights: NodalWeights) -> np.ndarray:
        """Pairing in the measure ``eta^{-1}(dx + drho)``; this equals the load of F itself."""
        return (weights.volume * self.omega / self.eta_omega + weights.gamma * self.gamma / self.eta_gamma
                + weights.sigma * self.sigma / self.eta_sigma)


def reaction(spec: ReactionSpec, nl: Nonlinearity, weights: NodalWeights, t: float, w: np.ndarray) -> Reaction:
    try:
        xi = np.atleast_1d(kirchhoff_inverse(nl, w))
    except InversionError as exc:
        raise InversionError(f"node {exc.index}: {exc}", index=exc.index) from None
    ratio = np.asarray(nl.a(xi), float) / np.asarray(nl.db(xi), float)
    values, etas = [], []
    for (name, f), (_, _, eps) in zip(spec.parts(), weights.parts()):
        e = ratio / eps
        values.append(e * np.broadcast_to(np.asarray(f(t, xi), float), xi.shape))
        etas.append(e)
    return Reaction(*values, *etas)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuasilinearControls:
    k_max: int = 5
    tol: float = 1e-9
    w_max: float = 1e6


@dataclass(frozen=True, eq=False)
class QuasilinearResult:
    w: Trajectory
    u: Trajectory
    T_star: float
    reason: str                 # "completed", "bound exceeded", "inversion failed", "fixed-point divergence"
    iterations: tuple           # fixed-point iterations per accepted step
    residuals: tuple            # final fixed-point increment per accepted step
    flagged: tuple = ()         # steps accepted from a non-monotone refresh

    @property
    def completed(self) -> bool:
        return self.reason == "completed"


def _truncate_grid(grid: TimeGrid, n: int) -> TimeGrid:
    return TimeGrid(grid.times[: n + 1], grid.gamma)


def solve_quasilinear(op: DiscreteOperator, nl: Nonlinearity, spec: ReactionSpec, u0: np.ndarray,
                      grid: TimeGrid, controls: QuasilinearControls = QuasilinearControls()) -> QuasilinearResult:
    """Frozen-coefficient stepping in the Kirchhoff variable.

    Step n solves ``(M_s + tau K) w_n = M_s w_{n-1} + tau L_n`` where ``M_s``
    is the lumped mass weighted by ``1/eta`` and ``L_n`` the same-weighted
    pairing of the reaction, both evaluated at the current fixed-point
    iterate (initially ``w_{n-1}``). Up to ``k_max`` refreshes are made.
    """
    weights = nodal_weights(op)
    K = op.K.tocsr()
    try:
        w_prev = np.atleast_1d(kirchhoff(nl, np.asarray(u0, float)))
    except ValueError as exc:
        raise InversionError(f"initial value: {exc}") from None
    ws, us = [w_prev.copy()], [np.asarray(u0, float).copy()]
    iters, residuals, flagged = [], [], []
    reason = "completed"
    T_star = grid.T
    times = grid.times
    for step in range(1, grid.N + 1):
        t, tau = times[step], times[step] - times[step - 1]
        iterate = w_prev
        best, best_res, history = None, math.inf, []
        failure = None
        for k in range(max(1, controls.k_max)):
            try:
                R = reaction(spec, nl, weights, t, iterate)
            except InversionError:
                failure = "inversion failed"
                break
            s_diag = (weights.volume / R.eta_omega + weights.gamma / R.eta_gamma
                      + weights.sigma / R.eta_sigma)
            lhs = (sp.diags(s_diag) + tau * K).tocsc()
            rhs = s_diag * w_prev + tau * R.weighted_load(weights)
            new = spla.spsolve(lhs, rhs)
            if not np.all(np.isfinite(new)) or np.abs(new).max() > controls.w_max:
                failure = "bound exceeded"
                break
            res = float(np.abs(new - iterate).max())
            history.append(res)
            if res < best_res:
                best, best_res = new, res
            iterate = new
            if res <= controls.tol * (1.0 + float(np.abs(new).max())):
                break
        if failure is None and best is not None and controls.k_max > 1:
            converged = history[-1] <= controls.tol * (1.0 + float(np.abs(iterate).max()))
            if not converged and len(history) > 1 and history[-1] > history[0]:
                failure = "fixed-point divergence"
            elif any(b > a for a, b in zip(history, history[1:])):
                flagged.append(step)
                log.info("step %d: non-monotone fixed-point refresh, accepting best iterate", step)
                iterate = best
        if failure is None:
            try:
                u_new = np.atleast_1d(kirchhoff_inverse(nl, iterate))
            except InversionError:
                failure = "inversion failed"
        if failure is not None:
            reason, T_star = failure, float(t)
            break
        ws.append(iterate)
        us.append(u_new)
        iters.append(len(history))
        residuals.append(history[-1] if history else 0.0)
        w_prev = iterate

    sub = _truncate_grid(grid, len(ws) - 1)
    w_traj = Trajectory(sub, np.array(ws), op.dofmap, "lumped", "semi_implicit", tuple(iters))
    u_traj = Trajectory(sub, np.array(us), op.dofmap, "lumped", "semi_implicit", tuple(iters))
    return QuasilinearResult(w_traj, u_traj, T_star, reason, tuple(iters), tuple(residuals), tuple(flagged))
