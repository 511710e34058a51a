"""Output writers: legacy VTK fields, CSV series and JSON summaries."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


def _fmt(v: float) -> str:
    return repr(float(v))


def vtk_text(mesh, point_data: dict, title: str = "dynbc field") -> str:
    """VTK legacy 2.0 ASCII unstructured grid with scalar point data.

    ``point_data`` maps names to arrays over all mesh vertices.
    """
    n, m = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 2.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += [str(VTK_TRIANGLE)] * m
    lines.append(f"CELL_DATA {m}")
    lines += ["SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in mesh.regions]
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"point data {name!r} has shape {values.shape}, expected ({n},)")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in values]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh, point_data: dict, title: str = "dynbc field") -> None:
    Path(path).write_text(vtk_text(mesh, point_data, title))


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    """Write dict rows with a header line (RFC 4180 quoting, CRLF line ends)."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in columns})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def jsonable(obj):
    """Convert numpy scalars and arrays, and map non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, data: dict) -> None:
    Path(path).write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")
