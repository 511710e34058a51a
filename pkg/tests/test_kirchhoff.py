import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbc.assembly import make_coefficients
from dynbc.kirchhoff import (InversionError, QuasilinearControls, ReactionSpec, eta, exponential,
                             fermi_dirac, fermi_dirac_b, fermi_dirac_minus_half, identity, kirchhoff,
                             kirchhoff_inverse, nodal_weights, phase_separation, power, reaction,
                             solve_quasilinear)
from dynbc.linear_solver import Loads, solve_linear, uniform_grid
from dynbc.mesh import SIDES, generate_rect_mesh
from dynbc.operator import build_operator


def test_transform_examples():
    assert kirchhoff(power(1.0, 2.0), 2.0) == pytest.approx(2.0 + 8.0 / 3.0, rel=1e-14)
    assert kirchhoff(exponential(), 1.0) == pytest.approx(math.e - 1.0, rel=1e-14)
    assert kirchhoff(identity(), -3.5) == -3.5


def test_inverse_examples():
    assert kirchhoff_inverse(exponential(), 1.0) == pytest.approx(math.log(2.0), rel=1e-13)
    y = np.array([0.5, 3.0, 20.0])
    assert np.allclose(kirchhoff_inverse(exponential(), y), np.log1p(y), rtol=1e-13)


def test_quadrature_transform_without_closed_form():
    nl = phase_separation(lambda x: 1.0 + np.asarray(x) ** 2, lambda x: np.asarray(x) + np.asarray(x) ** 3 / 3,
                          lambda x: 1.0 + np.asarray(x) ** 2)
    assert kirchhoff(nl, 1.5) == pytest.approx(1.5 + 1.5 ** 3 / 3, rel=1e-12)


@pytest.mark.parametrize("nl", [identity(), power(1.0, 2.0), exponential()], ids=lambda n: n.name)
def test_roundtrip_on_samples(nl):
    xi = np.random.default_rng(5).uniform(-10.0, 10.0, 100)
    assert np.abs(kirchhoff_inverse(nl, kirchhoff(nl, xi)) - xi).max() <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(-10.0, 10.0))
def test_roundtrip_property_power(x):
    nl = power(0.5, 3.0)
    assert kirchhoff_inverse(nl, kirchhoff(nl, x)) == pytest.approx(x, abs=1e-10)


def test_inverse_rejects_unattainable_target():
    nl = identity(x_max=5.0)
    with pytest.raises(InversionError) as info:
        kirchhoff_inverse(nl, np.array([1.0, 7.0]))
    assert info.value.index == 1


def test_transform_rejects_argument_outside_working_interval():
    with pytest.raises(ValueError):
        kirchhoff(identity(x_max=2.0), 3.0)


def test_power_rejects_bad_parameters():
    with pytest.raises(ValueError):
        power(0.0, 2.0)


def test_eta_examples():
    # a = 1 + x^2 at K^{-1}(4/3) = 1, so a/b' = 2 and eta = 2 / 2
    assert eta(power(1.0, 2.0), 2.0, 4.0 / 3.0) == pytest.approx(1.0, rel=1e-12)
    nl = phase_separation(np.exp, np.exp, np.exp, x_max=10.0)
    w = np.linspace(-0.9, 5.0, 11)
    assert np.abs(eta(nl, 3.0, w) - 1.0 / 3.0).max() <= 1e-14


def test_nonlinearity_check_flags_nonpositive_factor():
    nl = phase_separation(lambda x: np.asarray(x, float), lambda x: np.asarray(x, float) ** 2 / 2,
                          lambda x: np.asarray(x, float), x_max=1.0)
    assert nl.check()


# Fermi-Dirac -----------------------------------------------------------------

def test_fermi_dirac_boltzmann_limit():
    s = -10.0
    ratio = fermi_dirac(s) / math.exp(s)
    assert 0.99 <= ratio <= 1.001


def test_fermi_dirac_is_increasing_and_b_prime_matches():
    s = np.linspace(-20.0, 20.0, 81)
    f = fermi_dirac(s)
    assert np.all(np.diff(f) > 0.0)
    nl = fermi_dirac_b()
    assert nl.derivative_defect(np.linspace(-5.0, 5.0, 21)).max() < 1e-7
    assert np.all(fermi_dirac_minus_half(s) > 0.0)


def test_fermi_dirac_degenerate_asymptote():
    s = 50.0
    leading = s ** 1.5 / math.gamma(2.5)
    assert fermi_dirac(s) == pytest.approx(leading, rel=0.02)


def test_fermi_dirac_rejects_large_arguments():
    with pytest.raises(ValueError):
        fermi_dirac(60.0)


# reactions -------------------------------------------------------------------

def test_reaction_supported_on_gamma_only():
    mesh = generate_rect_mesh(4, 4, gamma_spec=("top",))
    op = build_operator(mesh, make_coefficients(mesh))
    weights = nodal_weights(op)
    spec = ReactionSpec(f_gamma=lambda t, xi: np.ones_like(xi))
    R = reaction(spec, identity(), weights, 0.0, np.zeros(op.n))
    load = R.load(weights)
    on_gamma = weights.gamma > 0
    assert np.all(load[~on_gamma] == 0.0)
    # the two top corners are Dirichlet nodes, each losing half an edge
    assert load.sum() == pytest.approx(1.0 - 0.25)


def test_weighted_load_equals_plain_load_for_identity():
    mesh = generate_rect_mesh(4, 4, 0.5, (0.0, 1.0), SIDES)
    op = build_operator(mesh, make_coefficients(mesh, eps=2.0, eps_gamma=0.5, eps_sigma=3.0))
    weights = nodal_weights(op)
    spec = ReactionSpec(lambda t, xi: 1.0 + xi, lambda t, xi: 2.0 + xi, lambda t, xi: 3.0 + xi)
    w = np.linspace(0.0, 1.0, op.n)
    R = reaction(spec, identity(), weights, 0.0, w)
    direct = weights.volume * (1 + w) + weights.gamma * (2 + w) + weights.sigma * (3 + w)
    assert np.allclose(R.weighted_load(weights), direct, rtol=1e-14)


def test_lipschitz_check():
    spec = ReactionSpec(f_omega=lambda t, xi: xi ** 2, lipschitz=lambda M, t: 2.0 * M)
    assert spec.check_lipschitz(3.0) == []
    bad = ReactionSpec(f_omega=lambda t, xi: xi ** 2, lipschitz=lambda M, t: 0.1)
    assert bad.check_lipschitz(3.0)


# quasilinear solver ----------------------------------------------------------

@pytest.fixture(scope="module")
def small_op():
    mesh = generate_rect_mesh(6, 6, 0.5, (0.0, 1.0), SIDES)
    return build_operator(mesh, make_coefficients(mesh, mu={0: 1.0, 1: 2.0}, eps={0: 0.5, 1: 3.0},
                                                  eps_gamma=0.5, eps_sigma=3.0))


def test_quasilinear_with_identity_matches_linear_solver(small_op):
    op = small_op
    u0 = np.random.default_rng(3).uniform(-1.0, 1.0, op.n)
    grid = uniform_grid(0.1, 10)
    res = solve_quasilinear(op, identity(), ReactionSpec(f_sigma=lambda t, xi: np.ones_like(xi)), u0, grid)
    lin = solve_linear(op, Loads(f_sigma=lambda x, y, t: np.ones_like(x)), u0, grid, mass="lumped",
                       include_B=False)
    assert res.completed
    assert np.abs(res.u.states - lin.states).max() <= 1e-10


def test_blowup_probe_stops_inside_the_interval():
    mesh = generate_rect_mesh(4, 4, gamma_spec=SIDES)
    op = build_operator(mesh, make_coefficients(mesh))
    sq = ReactionSpec(lambda t, xi: xi ** 2, lambda t, xi: xi ** 2)
    res = solve_quasilinear(op, identity(x_max=1e5), sq, np.full(op.n, 10.0), uniform_grid(0.2, 400),
                            QuasilinearControls(w_max=1e3))
    assert res.reason == "bound exceeded"
    assert 0.0 < res.T_star < 0.2
    assert len(res.u.states) == len(res.iterations) + 1


def test_bounded_reaction_completes(small_op):
    bounded = ReactionSpec(lambda t, xi: np.sin(xi), f_sigma=lambda t, xi: np.ones_like(xi))
    res = solve_quasilinear(small_op, power(1.0, 2.0), bounded, np.full(small_op.n, 0.5), uniform_grid(0.2, 20))
    assert res.completed
    assert res.T_star == 0.2
    assert np.all(np.isfinite(res.u.states))


def test_solution_is_continuous_at_the_start(small_op):
    u0 = np.random.default_rng(1).uniform(0.0, 1.0, small_op.n)
    jumps = []
    for n in (10, 100):
        res = solve_quasilinear(small_op, power(1.0, 2.0), ReactionSpec(), u0, uniform_grid(1e-3, n))
        jumps.append(np.abs(res.u.states[1] - u0).max())
    assert jumps[1] < jumps[0]
