import math

import numpy as np
import pytest

from dynbc.assembly import make_coefficients
from dynbc.manufactured import convergence_study, jump_solution, observed_orders, smooth_solution
from dynbc.mesh import SIDES, generate_rect_mesh
from dynbc.linear_solver import (Loads, TimeGrid, WeightedNormSpec, apriori_ratio, graded_grid,
                                 grading_exponent, solve_linear, uniform_grid, weighted_norm,
                                 weighted_series_norm)
from dynbc.operator import build_operator, dense_eigen_oracle
from dynbc.state_space import interp, lp_norm


def test_constant_state_is_an_equilibrium(free_op):
    u0 = np.full(free_op.n, 0.7)
    traj = solve_linear(free_op, Loads(), u0, uniform_grid(0.5, 10))
    assert np.allclose(traj.states, 0.7, atol=1e-13)


def test_zero_start_and_zero_load_stay_zero(dirichlet_op):
    traj = solve_linear(dirichlet_op, Loads(), np.zeros(dirichlet_op.n), uniform_grid(1.0, 5))
    assert not np.any(traj.states)


@pytest.mark.parametrize("scheme", ["implicit_euler", "crank_nicolson"])
def test_trajectory_shape_and_metadata(dirichlet_op, scheme):
    traj = solve_linear(dirichlet_op, Loads(), np.ones(dirichlet_op.n), uniform_grid(0.1, 7), scheme)
    assert traj.states.shape == (8, dirichlet_op.n)
    assert traj.derivative.shape == (7, dirichlet_op.n)
    assert traj.scheme == scheme


def test_time_grid_rejects_bad_nodes():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 0.5]))


def test_smooth_manufactured_orders():
    rows = convergence_study(smooth_solution(), levels=3, base_n=4, T=0.05)
    assert rows[-1]["order_l2"] >= 1.9
    assert rows[-1]["order_h1"] >= 0.9


def test_convergence_study_needs_two_levels():
    with pytest.raises(ValueError):
        convergence_study(smooth_solution(), levels=1)


def test_observed_orders_of_exact_power_law():
    h = np.array([0.1, 0.05, 0.025])
    o = observed_orders(h, 3.0 * h ** 2)
    assert math.isnan(o[0])
    assert np.allclose(o[1:], 2.0)


def test_time_orders_against_exact_semigroup(dirichlet_op):
    op = dirichlet_op
    u0 = interp(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), op.mesh, op.dofmap)
    exact = dense_eigen_oracle(op).apply(lambda lam: np.exp(-0.1 * lam), u0)

    def order(scheme, n):
        e = [lp_norm(solve_linear(op, Loads(), u0, uniform_grid(0.1, k), scheme).final - exact, 2, op.dofmap)
             for k in (n, 2 * n)]
        return math.log2(e[0] / e[1])

    assert order("implicit_euler", 20) == pytest.approx(1.0, abs=0.05)
    # Crank-Nicolson is superconvergent before the stiff modes settle
    assert order("crank_nicolson", 40) == pytest.approx(2.0, abs=0.05)


def test_maximum_principle_with_lumped_mass(free_op, rng):
    u0 = rng.uniform(0.0, 1.0, free_op.n)
    traj = solve_linear(free_op, Loads(), u0, uniform_grid(0.2, 20), mass="lumped")
    assert traj.states.min() >= -1e-12
    assert traj.states.max() <= 1.0 + 1e-12


def test_eps_continuity():
    """Solutions depend continuously on the capacity on the interface."""
    mesh = generate_rect_mesh(6, 6, 0.5, (0.0, 1.0), SIDES)
    u0 = interp(lambda x, y: x * y, mesh, build_operator(mesh, make_coefficients(mesh)).dofmap)
    finals = []
    for e in (1.0, 1.0 + 1e-6):
        op = build_operator(mesh, make_coefficients(mesh, eps_sigma=e))
        finals.append(solve_linear(op, Loads(), u0, uniform_grid(0.1, 10)).final)
    assert np.abs(finals[0] - finals[1]).max() < 1e-6


# weighted norms --------------------------------------------------------------

def test_weight_alpha_one_is_plain_lebesgue_norm():
    times = np.linspace(0.0, 1.0, 11)
    norms = np.linspace(1.0, 2.0, 10)
    spec = WeightedNormSpec(2.0, 1.0)
    assert weighted_series_norm(times, norms, spec) == pytest.approx(math.sqrt(np.sum(0.1 * norms ** 2)))


def test_weighted_norm_of_constant_trajectory(free_op):
    spec = WeightedNormSpec(2.0, 0.6)
    grid = uniform_grid(1.0, 1000)
    traj = solve_linear(free_op, Loads(), np.ones(free_op.n), grid)
    # int_0^1 t^{0.8} dt = 1/1.8
    expected = math.sqrt(1.0 / 1.8) * lp_norm(np.ones(free_op.n), 2, free_op.dofmap)
    assert weighted_norm(traj, spec) == pytest.approx(expected, rel=0.02)


def test_weighted_norm_of_zero_trajectory(dirichlet_op):
    traj = solve_linear(dirichlet_op, Loads(), np.zeros(dirichlet_op.n), uniform_grid(1.0, 4))
    assert weighted_norm(traj, WeightedNormSpec(2.0, 0.8)) == 0.0


@pytest.mark.parametrize("s,alpha", [(2.0, 0.4), (1.0, 0.9), (3.0, 1.2)])
def test_weighted_norm_spec_rejects_bad_exponents(s, alpha):
    with pytest.raises(ValueError):
        WeightedNormSpec(s, alpha)


def test_graded_grid_nodes():
    spec = WeightedNormSpec(2.0, 1.0)
    assert grading_exponent(spec) == pytest.approx(2.0)
    assert np.allclose(graded_grid(1.0, 2, spec).times, [0.0, 0.25, 1.0])
    assert grading_exponent(WeightedNormSpec(2.0, 0.6)) == pytest.approx(10.0)


def test_graded_grid_needs_two_steps():
    with pytest.raises(ValueError):
        graded_grid(1.0, 1, WeightedNormSpec(2.0, 1.0))


# a priori ratio --------------------------------------------------------------

def test_apriori_ratio_is_homogeneous_in_the_source(dirichlet_op):
    spec = WeightedNormSpec(2.0, 0.8)
    loads = Loads(f_omega=lambda x, y, t: np.ones_like(x))
    grid = graded_grid(0.5, 16, spec)
    u0 = np.zeros(dirichlet_op.n)
    r1 = apriori_ratio(solve_linear(dirichlet_op, loads, u0, grid), u0, loads, spec, dirichlet_op)
    r2 = apriori_ratio(solve_linear(dirichlet_op, loads.scaled(2.0), u0, grid), u0, loads.scaled(2.0), spec,
                       dirichlet_op)
    assert np.isfinite(r1) and r1 > 0.0
    assert r2 == pytest.approx(r1, rel=1e-10)


def test_apriori_ratio_needs_data(dirichlet_op):
    spec = WeightedNormSpec(2.0, 0.8)
    u0 = np.zeros(dirichlet_op.n)
    traj = solve_linear(dirichlet_op, Loads(), u0, uniform_grid(0.1, 4))
    with pytest.raises(ZeroDivisionError):
        apriori_ratio(traj, u0, Loads(), spec, dirichlet_op)


def test_apriori_ratio_indicator_start_is_stable_under_refinement():
    spec = WeightedNormSpec(2.0, 0.6)
    ratios = []
    for n, steps in ((8, 16), (16, 32)):
        mesh = generate_rect_mesh(n, n)
        op = build_operator(mesh, make_coefficients(mesh))
        u0 = interp(lambda x, y: ((np.abs(x - 0.5) < 0.25) & (np.abs(y - 0.5) < 0.25)).astype(float), mesh,
                    op.dofmap)
        traj = solve_linear(op, Loads(), u0, graded_grid(0.5, steps, spec), mass="lumped")
        ratios.append(apriori_ratio(traj, u0, Loads(), spec, op))
    assert abs(ratios[1] - ratios[0]) / ratios[0] < 0.2


def test_jump_solution_is_continuous_across_interface():
    ex = jump_solution(1.0, 10.0)
    x = np.linspace(0.0, 1.0, 7)
    below = ex.u(x, np.full_like(x, 0.5 - 1e-12), 0.3)
    above = ex.u(x, np.full_like(x, 0.5 + 1e-12), 0.3)
    assert np.allclose(below, above, atol=1e-9)
