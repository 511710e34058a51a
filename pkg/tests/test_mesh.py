import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynbc.mesh import (Mesh, MeshError, SIDES, facet_measure, generate_rect_mesh, generate_slit_disk,
                        load_mesh, read_mesh, save_mesh, validate, write_mesh)

SQUARE = """dynbc-mesh 1
# two triangles
vertices 4
0 0
1 0
1 1
0 1
triangles 2
0 1 2 0
0 2 3 0
boundary_edges 4
0 1 dirichlet
1 2 gamma
2 3 dirichlet
3 0 dirichlet
sigma_edges 0
"""


def test_smallest_crossed_cell():
    m = generate_rect_mesh(1, 1)
    # four corners plus the crossing point
    assert (m.n_vertices, m.n_triangles, len(m.dirichlet_edges)) == (5, 4, 4)
    assert validate(m) == []


def test_interface_and_gamma_counts():
    m = generate_rect_mesh(2, 2, 0.5, (0.0, 1.0), ("top",))
    assert len(m.sigma_edges) == 2
    assert len(m.gamma_edges) == 2


def test_interface_off_grid():
    with pytest.raises(MeshError, match="grid line"):
        generate_rect_mesh(4, 4, 0.3)


def test_extent_off_grid():
    with pytest.raises(MeshError):
        generate_rect_mesh(4, 4, 0.5, (0.1, 0.9))


def test_regions_and_orientation():
    m = generate_rect_mesh(4, 4, 0.5)
    c = m.centroids
    assert np.all(m.regions[c[:, 1] < 0.5] == 0) and np.all(m.regions[c[:, 1] > 0.5] == 1)
    # side 1 is the lower triangle, so the interface normal points up
    assert np.all(c[m.sigma_side1, 1] < 0.5)


def test_facet_measures():
    assert facet_measure(generate_rect_mesh(3, 3, gamma_spec=("top",)), "gamma") == pytest.approx(1.0)
    assert facet_measure(generate_rect_mesh(4, 4, 0.5), "sigma") == pytest.approx(1.0)
    assert facet_measure(generate_rect_mesh(8, 8, 0.5, (0.25, 0.75)), "sigma") == pytest.approx(0.5)
    m = generate_rect_mesh(4, 4, gamma_spec=("top", "left"))
    assert facet_measure(m, "gamma") + facet_measure(m, "dirichlet") == pytest.approx(4.0)


def test_slit_disk():
    m0 = generate_slit_disk(0)
    assert validate(m0) == []
    # the slit points other than the centre appear twice
    on_slit = np.flatnonzero((np.abs(m0.vertices[:, 1]) < 1e-15) & (m0.vertices[:, 0] > 0))
    xs, counts = np.unique(m0.vertices[on_slit, 0], return_counts=True)
    assert np.all(counts == 2)
    m2 = generate_slit_disk(2)
    assert validate(m2) == []
    total = facet_measure(m2, "gamma") + facet_measure(m2, "dirichlet")
    assert abs(total - (2 * math.pi + 2)) <= 0.05 * (2 * math.pi + 2)
    assert len(m2.sigma_edges) == 0


def test_slit_disk_topology_stable():
    for n in range(3):
        a, b = generate_slit_disk(n), generate_slit_disk(n + 1)
        assert facet_measure(a, "dirichlet") == pytest.approx(2.0)
        assert facet_measure(b, "dirichlet") == pytest.approx(2.0)
        assert set(a.boundary_tags) == set(b.boundary_tags) == {"gamma", "dirichlet"}


def test_load_minimal_square():
    m = load_mesh(SQUARE)
    assert m.n_vertices == 4 and m.n_triangles == 2
    assert facet_measure(m, "gamma") == pytest.approx(1.0)


def test_round_trip(tmp_path):
    m = generate_rect_mesh(4, 4, 0.5, (0.25, 0.75), ("top", "left"))
    again = load_mesh(save_mesh(m))
    assert again.boundary_tags == m.boundary_tags
    np.testing.assert_array_equal(again.sigma_edges, m.sigma_edges)
    np.testing.assert_array_equal(again.sigma_side1, m.sigma_side1)
    np.testing.assert_array_equal(again.vertices, m.vertices)
    write_mesh(m, tmp_path / "m.msh")
    assert save_mesh(read_mesh(tmp_path / "m.msh")) == save_mesh(m)


def test_sigma_on_boundary_rejected():
    text = SQUARE.replace("sigma_edges 0", "sigma_edges 1\n0 1 0")
    with pytest.raises(MeshError, match="sigma edge not interior"):
        load_mesh(text)


@pytest.mark.parametrize("text, match", [
    (SQUARE.replace("1 0\n1 1", "1 x\n1 1"), "line 5"),
    (SQUARE.replace("0 2 3 0", "0 2 9 0"), "dangling"),
    (SQUARE.replace("1 2 gamma", "1 2 robin"), "inconsistent tags"),
    ("hello\n", "header"),
])
def test_load_errors(text, match):
    with pytest.raises(MeshError, match=match):
        load_mesh(text)


def test_validate_negative_triangle():
    m = generate_rect_mesh(1, 1)
    tris = m.triangles.copy()
    tris[2] = tris[2][::-1]
    bad = Mesh(m.vertices, tris, m.regions, m.boundary_edges, m.boundary_tags)
    assert any("triangle 2 " in r for r in validate(bad))


def test_validate_sigma_one_triangle():
    m = generate_rect_mesh(1, 1)
    bad = Mesh(m.vertices, m.triangles, m.regions, m.boundary_edges[1:], m.boundary_tags[1:],
               m.boundary_edges[:1], [0])
    assert any("sigma edge not interior" in r for r in validate(bad))


def test_validate_duplicate_vertex():
    m = generate_rect_mesh(1, 1)
    verts = m.vertices.copy()
    verts[4] = verts[0]
    bad = Mesh(verts, m.triangles, m.regions, m.boundary_edges, m.boundary_tags)
    assert validate(bad)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 6), ny_half=st.integers(1, 3), gamma=st.sets(st.sampled_from(SIDES)),
       seed=st.integers(0, 2 ** 16))
def test_generated_meshes_valid(nx, ny_half, gamma, seed):
    ny = 2 * ny_half
    m = generate_rect_mesh(nx, ny, 0.5, (0.0, 1.0), tuple(gamma))
    assert validate(m) == []
    et = m.edge_triangles
    assert all(len(et[(min(a, b), max(a, b))]) == 2 for a, b in m.sigma_edges)
    # facet measure is invariant under vertex renumbering
    perm = np.random.default_rng(seed).permutation(m.n_vertices)
    inv = np.argsort(perm)
    renum = Mesh(m.vertices[perm], inv[m.triangles], m.regions, inv[m.boundary_edges], m.boundary_tags,
                 inv[m.sigma_edges], m.sigma_side1)
    for tag in ("gamma", "dirichlet", "sigma"):
        assert facet_measure(renum, tag) == pytest.approx(facet_measure(m, tag), abs=1e-14)
