"""Manufactured solutions and spatial convergence studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import hat_gradients, make_coefficients
from .linear_solver import Loads, solve_linear, uniform_grid
from .mesh import generate_rect_mesh
from .operator import build_operator
from .state_space import interp

# Dunavant degree-5 rule on the reference triangle (weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_ERR_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_ERR_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact solution with matching sources on the unit square.

    ``u`` and ``grad`` take ``(x, y, t)``; the mesh is generated with the
    given interface and gamma sides, ``mu`` is per region.
    """
    name: str
    u: object
    grad: object
    f_omega: object
    f_gamma: object = None
    f_sigma: object = None
    mu: dict = field(default_factory=lambda: {0: 1.0})
    interface_y: float | None = None
    gamma: tuple = ()

    @property
    def loads(self) -> Loads:
        return Loads(self.f_omega, self.f_gamma, self.f_sigma)


def smooth_solution() -> ManufacturedSolution:
    """``e^{-t} sin(pi x) sin(pi y)`` with mu = I, eps = 1, Dirichlet everywhere."""
    pi = math.pi

    def u(x, y, t):
        return np.exp(-t) * np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y, t):
        e = np.exp(-t)
        return np.stack([e * pi * np.cos(pi * x) * np.sin(pi * y),
                         e * pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    def f_omega(x, y, t):
        return (2.0 * pi ** 2 - 1.0) * u(x, y, t)

    return ManufacturedSolution("smooth", u, grad, f_omega)


def jump_solution(mu_low: float = 1.0, mu_high: float = 10.0) -> ManufacturedSolution:
    """``e^{-t} sin(pi x) (y - y^3)`` with mu jumping across y = 1/2.

    The solution is continuous with a nonzero conormal jump
    ``(mu_low - mu_high) d_y u`` on the interface, fed by the interface source.
    """
    pi = math.pi

    def g(y):
        return y - y ** 3

    def u(x, y, t):
        return np.exp(-t) * np.sin(pi * x) * g(y)

    def grad(x, y, t):
        e = np.exp(-t)
        return np.stack([e * pi * np.cos(pi * x) * g(y),
                         e * np.sin(pi * x) * (1.0 - 3.0 * y ** 2)], axis=-1)

    def f_omega(x, y, t):
        mu = np.where(y < 0.5, mu_low, mu_high)
        return np.exp(-t) * np.sin(pi * x) * (-g(y) + mu * (pi ** 2 * g(y) + 6.0 * y))

    def f_sigma(x, y, t):
        # eps u_t + (mu_low - mu_high) d_y u at y = 1/2, with g(1/2) = 3/8, g'(1/2) = 1/4
        return np.exp(-t) * np.sin(pi * x) * (-0.375 + 0.25 * (mu_low - mu_high))

    return ManufacturedSolution("jump", u, grad, f_omega, None, f_sigma,
                                {0: mu_low, 1: mu_high}, 0.5)


MANUFACTURED = {"smooth": smooth_solution, "jump": jump_solution}


def error_norms(mesh, dofmap, u_h: np.ndarray, exact: ManufacturedSolution, t: float) -> tuple:
    """L2(domain) error and H1 seminorm error of the P1 field ``u_h``."""
    full = dofmap.expand(u_h)
    tri = mesh.triangles
    p = mesh.vertices[tri]
    pts = np.einsum("qk,mkd->mqd", _ERR_BARY, p)
    uh_q = np.einsum("qk,mk->mq", _ERR_BARY, full[tri])
    ex_q = exact.u(pts[..., 0], pts[..., 1], t)
    area = mesh.areas
    l2 = np.sum(area[:, None] * _ERR_W[None] * (uh_q - ex_q) ** 2)
    grad_h = np.einsum("mk,mkd->md", full[tri], hat_gradients(mesh))
    gex = exact.grad(pts[..., 0], pts[..., 1], t)
    h1 = np.sum(area[:, None] * _ERR_W[None] * np.sum((grad_h[:, None, :] - gex) ** 2, axis=-1))
    return math.sqrt(l2), math.sqrt(h1)


def observed_orders(h: np.ndarray, err: np.ndarray) -> np.ndarray:
    """Orders between consecutive levels; NaN for the first."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    out = np.full(len(h), np.nan)
    out[1:] = np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])
    return out


def convergence_study(exact: ManufacturedSolution, levels: int = 3, base_n: int = 8, T: float = 0.1,
                      scheme: str = "implicit_euler", mass: str = "consistent",
                      tau_factor: float = 1.0) -> list[dict]:
    """Refine the mesh ``levels`` times with ``tau = tau_factor h^2``.

    Returns one row per level with h, dofs, both errors at T and observed
    orders against the previous level.
    """
    if levels < 2:
        raise ValueError("a convergence order needs at least two levels")
    rows = []
    for k in range(levels):
        n = base_n * 2 ** k
        h = 1.0 / n
        mesh = generate_rect_mesh(n, n, exact.interface_y, (0.0, 1.0), exact.gamma)
        coeffs = make_coefficients(mesh, mu=exact.mu)
        op = build_operator(mesh, coeffs)
        if scheme == "crank_nicolson":
            n_steps = max(1, math.ceil(T / (tau_factor * h)))
        else:
            n_steps = max(1, math.ceil(T / (tau_factor * h * h)))
        u0 = interp(lambda x, y: exact.u(x, y, 0.0), mesh, op.dofmap)
        traj = solve_linear(op, exact.loads, u0, uniform_grid(T, n_steps), scheme, mass)
        l2, h1 = error_norms(mesh, op.dofmap, traj.final, exact, T)
        rows.append({"level": k, "n": n, "h": h, "dofs": op.n, "steps": n_steps, "l2": l2, "h1": h1})
    o2 = observed_orders([r["h"] for r in rows], [r["l2"] for r in rows])
    o1 = observed_orders([r["h"] for r in rows], [r["h1"] for r in rows])
    for r, a, b in zip(rows, o2, o1):
        r["order_l2"], r["order_h1"] = float(a), float(b)
    return rows
