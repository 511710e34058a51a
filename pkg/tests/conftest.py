import numpy as np
import pytest

from dynbc.assembly import make_coefficients
from dynbc.mesh import SIDES, generate_rect_mesh
from dynbc.operator import build_operator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def free_op():
    """8x8 mesh without Dirichlet edges, full interface, piecewise eps."""
    mesh = generate_rect_mesh(8, 8, 0.5, (0.0, 1.0), SIDES)
    coeffs = make_coefficients(mesh, mu={0: 1.0, 1: [[2.0, 0.3], [-0.3, 1.0]]}, eps={0: 0.5, 1: 3.0},
                               eps_gamma=0.5, eps_sigma=3.0)
    return build_operator(mesh, coeffs)


@pytest.fixture(scope="session")
def dirichlet_op():
    mesh = generate_rect_mesh(8, 8, 0.5)
    return build_operator(mesh, make_coefficients(mesh))
