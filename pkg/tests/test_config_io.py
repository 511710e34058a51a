import json

import numpy as np
import pytest

from dynbc.config import ConfigError, Expression, build_coefficients, build_grid, build_initial, build_mesh, \
    parse_config
from dynbc.io import jsonable, read_csv, vtk_text, write_csv, write_json
from dynbc.mesh import generate_rect_mesh
from dynbc.state_space import build_dofmap

MINIMAL = "[mesh]\n[time]\nT = 1\nN = 4\n"


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.get("problem", "kind") == "linear"
    assert cfg.get("time", "mass") == "lumped"
    grid = build_grid(cfg)
    assert grid.N == 4 and grid.T == 1.0


def test_missing_sections_are_named():
    with pytest.raises(ConfigError, match=r"\[mesh\]"):
        parse_config("[time]\nT = 1\nN = 4\n")


def test_missing_time_section_is_named():
    with pytest.raises(ConfigError, match=r"\[time\]"):
        parse_config("[mesh]\nnx = 4\n")


@pytest.mark.parametrize("text,needle", [
    (MINIMAL + "[bogus]\na = 1\n", "unknown section"),
    ("[time]\nT = 1\nN = 4\n[mesh]\ncolour = red\n", "unknown key"),
    ("[mesh]\n[time]\nT = 1\n", "needs key 'N'"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_expression_evaluates_and_broadcasts():
    f = Expression("1 + 0*x", ("x", "y"), "[initial] u0")
    assert np.array_equal(f(np.zeros(3), np.zeros(3)), np.ones(3))
    g = Expression("sin(pi * x) * y", ("x", "y"), "test")
    assert g(np.array([0.5]), np.array([2.0]))[0] == pytest.approx(2.0)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open", "x +"])
def test_expression_rejects_unsafe_or_bad_text(text):
    with pytest.raises(ConfigError):
        Expression(text, ("x", "y"), "test")


def test_region_overrides_and_matrix_coefficients():
    cfg = parse_config("[time]\nT = 1\nN = 4\n[mesh]\nnx = 4\nny = 4\ninterface_y = 0.5\n"
                       "[coefficients]\nmu = 1\nmu.1 = 2 0.5 -0.5 1\neps.1 = 3\n")
    mesh = build_mesh(cfg)
    coeffs = build_coefficients(cfg, mesh)
    top = mesh.regions == 1
    assert np.allclose(coeffs.mu[top][0], [[2.0, 0.5], [-0.5, 1.0]])
    assert np.allclose(coeffs.eps_cell[top], 3.0)
    assert np.allclose(coeffs.eps_cell[~top], 1.0)
    assert not coeffs.is_symmetric


def test_unknown_region_is_an_error():
    cfg = parse_config("[time]\nT = 1\nN = 4\n[mesh]\nnx = 4\nny = 4\n[coefficients]\nmu.7 = 2\n")
    with pytest.raises(ConfigError, match="region 7"):
        build_coefficients(cfg, build_mesh(cfg))


def test_random_initial_value_follows_seed(monkeypatch):
    cfg = parse_config(MINIMAL + "[initial]\nu0 = random\n[problem]\nseed = 3\n")
    mesh = build_mesh(cfg)
    dm = build_dofmap(mesh)
    a = build_initial(cfg, mesh, dm)
    assert np.array_equal(a, build_initial(cfg, mesh, dm))
    monkeypatch.setenv("DYNBC_SEED", "4")
    assert cfg.seed == 4
    assert not np.array_equal(a, build_initial(cfg, mesh, dm))


def test_resolved_config_contains_every_section():
    resolved = parse_config(MINIMAL).resolved()
    assert {"mesh", "time", "coefficients", "output"} <= set(resolved)


# io --------------------------------------------------------------------------

def test_vtk_layout():
    mesh = generate_rect_mesh(1, 1)
    text = vtk_text(mesh, {"u": np.arange(mesh.n_vertices, dtype=float)}).splitlines()
    assert text[0] == "# vtk DataFile Version 2.0"
    assert text[2] == "ASCII"
    assert text[3] == "DATASET UNSTRUCTURED_GRID"
    assert "POINTS 5 double" in text
    assert "CELLS 4 16" in text
    assert text[text.index("CELL_TYPES 4") + 1] == "5"
    assert "POINT_DATA 5" in text and "SCALARS u double 1" in text


def test_vtk_rejects_wrong_field_length():
    with pytest.raises(ValueError):
        vtk_text(generate_rect_mesh(1, 1), {"u": np.zeros(3)})


def test_csv_roundtrip_keeps_full_precision(tmp_path):
    rows = [{"step": 1, "t": 0.1, "x": 1.0 / 3.0}]
    write_csv(tmp_path / "a.csv", rows)
    back = read_csv(tmp_path / "a.csv")
    assert float(back[0]["x"]) == 1.0 / 3.0
    assert back[0]["step"] == "1"


def test_json_handles_numpy_and_nonfinite(tmp_path):
    data = {"a": np.float64(1.5), "b": np.arange(3), "c": float("inf"), "d": np.bool_(True)}
    assert jsonable(data) == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "d": True}
    write_json(tmp_path / "x.json", data)
    assert json.loads((tmp_path / "x.json").read_text())["b"] == [0, 1, 2]
