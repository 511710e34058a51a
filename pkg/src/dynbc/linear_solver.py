"""Linear evolution ``eps u' + A u + B u = f`` with temporally weighted norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_load
from .operator import DiscreteOperator, SolverError, Stepper, fractional_power_apply
from .state_space import DofMap, lp_norm


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1 or t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("time nodes must start at 0 and increase strictly")
        object.__setattr__(self, "times", t)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class WeightedNormSpec:
    s: float
    alpha: float
    space: str = "lp"      # "lp" or "domain"
    p: float = 2.0

    def __post_init__(self):
        if not self.s > 1.0:
            raise ValueError("s must exceed 1")
        if not 1.0 / self.s < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (1/s, 1]")
        if self.space not in ("lp", "domain"):
            raise ValueError(f"unknown spatial norm {self.space!r}")


def uniform_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(np.linspace(0.0, T, N + 1))


def grading_exponent(spec: WeightedNormSpec) -> float:
    return max(1.0, spec.s / (spec.s * spec.alpha - 1.0))


def graded_grid(T: float, N: int, spec: WeightedNormSpec) -> TimeGrid:
    """Nodes ``T (n/N)^gamma`` with ``gamma = max(1, s / (s alpha - 1))``."""
    if N < 2:
        raise ValueError("a graded grid needs at least two steps")
    gamma = grading_exponent(spec)
    times = T * (np.arange(N + 1) / N) ** gamma
    times[-1] = T
    return TimeGrid(times, gamma)


@dataclass(frozen=True)
class Loads:
    """Source terms ``f(x, y, t)`` on the domain, on gamma and on sigma."""
    f_omega: object = None
    f_gamma: object = None
    f_sigma: object = None

    @property
    def is_zero(self) -> bool:
        return self.f_omega is None and self.f_gamma is None and self.f_sigma is None

    def vector(self, op: DiscreteOperator, t: float) -> np.ndarray:
        if self.is_zero:
            return np.zeros(op.n)
        return assemble_load(op.mesh, op.dofmap, self.f_omega, self.f_gamma, self.f_sigma, t)

    def scaled(self, c: float) -> "Loads":
        def scale(f):
            return None if f is None else (lambda x, y, t: c * np.asarray(f(x, y, t), dtype=float))
        return Loads(scale(self.f_omega), scale(self.f_gamma), scale(self.f_sigma))


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray              # (N + 1, n_free)
    dofmap: DofMap
    mass: str = "consistent"
    scheme: str = "implicit_euler"
    iterations: tuple = ()

    @property
    def derivative(self) -> np.ndarray:
        """Backward differences ``(u_n - u_{n-1}) / tau_n``, shape (N, n_free)."""
        return np.diff(self.states, axis=0) / self.grid.steps[:, None]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def solve_linear(op: DiscreteOperator, loads: Loads, u0: np.ndarray, grid: TimeGrid,
                 scheme: str = "implicit_euler", mass: str = "consistent",
                 include_B: bool = True) -> Trajectory:
    """March ``M_eps u' + (K + B) u = F(t)`` over ``grid``.

    Implicit Euler evaluates the load at the right endpoint; Crank-Nicolson
    averages both endpoints.
    """
    stepper = Stepper(op, scheme, mass, "eps", include_B)
    times = grid.times
    states = np.empty((grid.N + 1, op.n))
    states[0] = u0
    f_old = loads.vector(op, times[0]) if scheme == "crank_nicolson" else None
    for n in range(1, grid.N + 1):
        tau = times[n] - times[n - 1]
        f_new = None if loads.is_zero else loads.vector(op, times[n])
        try:
            states[n] = stepper.step(states[n - 1], tau, f_new, f_old)
        except SolverError as exc:
            raise SolverError(f"step {n} (tau={tau:g}): {exc}") from None
        f_old = f_new
    return Trajectory(grid, states, op.dofmap, mass, scheme, tuple([1] * grid.N))


# ---------------------------------------------------------------------------

def domain_seminorm(op: DiscreteOperator, u: np.ndarray, p: float, include_B: bool = True) -> float:
    """``|M_l^{-1} (K + B) u|_p`` with the lumped mass."""
    m = op.mass("lumped").diagonal()
    return lp_norm(op.generator("lumped", include_B) @ u / m, p, op.dofmap)


def _spatial_norms(values: np.ndarray, spec: WeightedNormSpec, dofmap: DofMap, op=None) -> np.ndarray:
    if spec.space == "domain":
        if op is None:
            raise ValueError("the domain seminorm needs the operator")
        return np.array([domain_seminorm(op, v, spec.p) for v in values])
    return np.array([lp_norm(v, spec.p, dofmap) for v in values])


def weighted_series_norm(times: np.ndarray, norms: np.ndarray, spec: WeightedNormSpec) -> float:
    """``(sum_n tau_n (t_n^{1-alpha} x_n)^s)^{1/s}`` over n = 1..N (right endpoints)."""
    tau = np.diff(times)
    t = times[1:]
    return float(np.sum(tau * (t ** (1.0 - spec.alpha) * norms) ** spec.s) ** (1.0 / spec.s))


def weighted_norm(traj: Trajectory, spec: WeightedNormSpec, which: str = "value",
                  op: DiscreteOperator | None = None) -> float:
    if which == "value":
        values = traj.states[1:]
    elif which == "derivative":
        values = traj.derivative
    else:
        raise ValueError(f"unknown component {which!r}")
    return weighted_series_norm(traj.grid.times, _spatial_norms(values, spec, traj.dofmap, op), spec)


def apriori_ratio(traj: Trajectory, u0: np.ndarray, loads: Loads, spec: WeightedNormSpec,
                  op: DiscreteOperator, n_nodes: int = 200) -> float:
    """Left side over right side of the maximal-regularity estimate.

    Numerator: weighted norms of ``u'`` in L^p and of ``u`` in the domain
    seminorm. Denominator: ``|u0|_p + |(A+1)^{alpha-1/s} u0|_p`` plus the
    weighted L^p norm of the source, represented nodally as ``M_l^{-1} F``.
    """
    p = spec.p
    lp = WeightedNormSpec(spec.s, spec.alpha, "lp", p)
    dom = WeightedNormSpec(spec.s, spec.alpha, "domain", p)
    num = weighted_norm(traj, lp, "derivative") + weighted_norm(traj, dom, "value", op)

    smooth = spec.alpha - 1.0 / spec.s
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0):
        # (A+1)^{smooth} u0 = (A+1) (A+1)^{-(1-smooth)} u0
        inner = fractional_power_apply(op, 1.0 - smooth, u0, n_nodes, mass="lumped")
        M = op.mass("lumped")
        lifted = spla.spsolve(M.tocsc(), op.generator("lumped") @ inner) + inner
        u0_norm = lp_norm(u0, p, op.dofmap) + lp_norm(lifted, p, op.dofmap)
    else:
        u0_norm = 0.0
    m = op.mass("lumped").diagonal()
    f_norms = np.array([lp_norm(loads.vector(op, t) / m, p, op.dofmap) for t in traj.grid.times[1:]])
    den = u0_norm + weighted_series_norm(traj.grid.times, f_norms, lp)
    if den == 0.0:
        raise ZeroDivisionError("initial value and source both vanish")
    return num / den
