import numpy as np
import pytest

from dynbc.assembly import (CoefficientError, assemble_b_operator, assemble_load, assemble_stiffness,
                            ellipticity_report, element_stiffness, make_coefficients)
from dynbc.mesh import SIDES, Mesh, generate_rect_mesh
from dynbc.state_space import assemble_mass, build_dofmap


def _tri():
    return Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [0], [[0, 1], [1, 2], [2, 0]], ["gamma"] * 3)


def test_reference_element_stiffness():
    k = element_stiffness(_tri(), np.eye(2)[None])[0]
    np.testing.assert_allclose(k, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_stiffness_linearity_and_symmetric_part(rng):
    m = generate_rect_mesh(4, 4, 0.5, (0, 1), ("top",))
    dm = build_dofmap(m)
    mu = np.array([[2.0, 0.7], [-0.3, 1.0]])
    K = assemble_stiffness(m, dm, mu)
    np.testing.assert_allclose(assemble_stiffness(m, dm, 2 * mu).toarray(), 2 * K.toarray())
    Ks = assemble_stiffness(m, dm, 0.5 * (mu + mu.T)).toarray()
    np.testing.assert_allclose(0.5 * (K + K.T).toarray(), Ks, atol=1e-13)
    assert abs(K - K.T).max() > 0


def test_constants_in_kernel():
    m = generate_rect_mesh(6, 6, 0.5, (0, 1), SIDES)
    dm = build_dofmap(m)
    K = assemble_stiffness(m, dm, np.array([[1.0, 0.4], [-0.4, 2.0]]))
    assert np.abs(K @ np.ones(dm.n_free)).max() <= 1e-12 * abs(K).sum(axis=1).max()


def test_b_operator():
    m = generate_rect_mesh(4, 4, 0.5, (0, 1), ("top",))
    dm = build_dofmap(m)
    assert abs(assemble_b_operator(m, dm, make_coefficients(m))).sum() == 0
    ones = make_coefficients(m, b_gamma=1.0, b_sigma=1.0)
    B = assemble_b_operator(m, dm, ones).toarray()
    from dynbc.state_space import edge_mass_full, restrict_matrix
    S = restrict_matrix(edge_mass_full(m, m.gamma_edges, 1.0) + edge_mass_full(m, m.sigma_edges, 1.0), dm)
    np.testing.assert_allclose(B, S.toarray(), atol=1e-15)
    only_gamma = assemble_b_operator(m, dm, make_coefficients(m, b_gamma=1.0)).toarray()
    gamma_nodes = np.isin(dm.free, np.unique(m.gamma_edges))
    assert np.all(only_gamma[~gamma_nodes] == 0) and np.all(only_gamma[:, ~gamma_nodes] == 0)
    assert np.all(np.diag(only_gamma)[gamma_nodes] > 0)


def test_load_sums():
    m = generate_rect_mesh(8, 8, 0.5, (0.25, 0.75), SIDES)
    dm = build_dofmap(m)
    one = lambda x, y, t: np.ones_like(x)
    assert assemble_load(m, dm, f_omega=one).sum() == pytest.approx(1.0, abs=1e-14)
    assert assemble_load(m, dm, f_sigma=one).sum() == pytest.approx(0.5, abs=1e-14)
    assert assemble_load(m, dm, f_omega=lambda x, y, t: x).sum() == pytest.approx(0.5, abs=1e-12)
    # the interior rule is exact for quadratics as well
    assert assemble_load(m, dm, f_omega=lambda x, y, t: x * y).sum() == pytest.approx(0.25, abs=1e-12)
    # linear in each field
    f, g = (lambda x, y, t: np.sin(x + t)), (lambda x, y, t: y ** 2)
    lhs = assemble_load(m, dm, lambda x, y, t: 2 * f(x, y, t) + g(x, y, t), t=0.3)
    np.testing.assert_allclose(lhs, 2 * assemble_load(m, dm, f, t=0.3) + assemble_load(m, dm, g, t=0.3), atol=1e-15)


def test_load_rejects_nonfinite():
    m = generate_rect_mesh(2, 2)
    with pytest.raises(ValueError, match="non-finite"):
        assemble_load(m, build_dofmap(m), f_omega=lambda x, y, t: np.full_like(x, np.inf))


@pytest.mark.parametrize("mu, lower", [
    (np.eye(2), 1.0),
    (0.5 * np.eye(2), 0.5),
    (np.array([[0.3, 0.9], [-0.9, 0.5]]), 0.3),
])
def test_ellipticity(mu, lower):
    m = generate_rect_mesh(6, 6, 0.5, (0, 1), ("top", "left"))
    dm = build_dofmap(m)
    c = make_coefficients(m, mu=mu)
    assert c.mu_lower == pytest.approx(lower)
    rep = ellipticity_report(assemble_stiffness(m, dm, c), m, dm, c.mu_lower, seed=3)
    assert rep["passed"] and rep["ratio"] >= min(lower, 1.0) - 1e-10


def test_m_matrix_structure():
    m = generate_rect_mesh(6, 6, 0.5, (0, 1), ("top", "right"))
    dm = build_dofmap(m)
    c = make_coefficients(m, mu={0: 1.0, 1: 3.0}, b_gamma=0.7, b_sigma=0.2)
    A = (assemble_stiffness(m, dm, c) + assemble_b_operator(m, dm, c, lumped=True)
         + 2.0 * assemble_mass(m, dm, lumped=True)).toarray()
    off = A - np.diag(np.diag(A))
    assert off.max() <= 1e-14
    assert np.all(np.diag(A) + off.sum(axis=1) >= -1e-12)


def test_coefficient_checks():
    m = generate_rect_mesh(2, 2)
    with pytest.raises(CoefficientError):
        make_coefficients(m, eps=0.0)
    with pytest.raises(CoefficientError):
        make_coefficients(m, mu=np.eye(2), mu_lower=2.0)
    c = make_coefficients(m, mu=np.array([[1.0, 1.0], [-1.0, 1.0]]))
    assert c.mu_upper == pytest.approx(np.sqrt(2.0))
    np.testing.assert_array_equal(c.transposed().mu, np.swapaxes(c.mu, 1, 2))
