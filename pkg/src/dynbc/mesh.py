"""Tagged two-dimensional triangle meshes.

A mesh carries three kinds of tagged edges:

* ``dirichlet`` boundary edges (homogeneous Dirichlet part),
* ``gamma`` boundary edges (dynamical boundary condition),
* ``sigma`` interior edges forming the interface, each with a designated
  side-1 triangle; the interface normal points from side 1 to side 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BOUNDARY_TAGS = ("dirichlet", "gamma")
SIDES = ("top", "bottom", "left", "right")


class MeshError(ValueError):
    """Raised for invalid generator arguments or malformed mesh documents."""


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray          # (n, 2) float
    triangles: np.ndarray         # (m, 3) int
    regions: np.ndarray           # (m,) int
    boundary_edges: np.ndarray    # (k, 2) int
    boundary_tags: tuple          # k strings in BOUNDARY_TAGS
    sigma_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    sigma_side1: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=int).reshape(-1, 3))
        object.__setattr__(self, "regions", np.asarray(self.regions, dtype=int).reshape(-1))
        object.__setattr__(self, "boundary_edges", np.asarray(self.boundary_edges, dtype=int).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", tuple(self.boundary_tags))
        object.__setattr__(self, "sigma_edges", np.asarray(self.sigma_edges, dtype=int).reshape(-1, 2))
        object.__setattr__(self, "sigma_side1", np.asarray(self.sigma_side1, dtype=int).reshape(-1))
        for arr in (self.vertices, self.triangles, self.regions, self.boundary_edges,
                    self.sigma_edges, self.sigma_side1):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges_with_tag(self, tag: str) -> np.ndarray:
        if tag == "sigma":
            return self.sigma_edges
        if tag not in BOUNDARY_TAGS:
            raise MeshError(f"unknown edge tag {tag!r}")
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask] if len(mask) else np.zeros((0, 2), dtype=int)

    @cached_property
    def gamma_edges(self) -> np.ndarray:
        return self.edges_with_tag("gamma")

    @cached_property
    def dirichlet_edges(self) -> np.ndarray:
        return self.edges_with_tag("dirichlet")

    @cached_property
    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counter-clockwise triangles)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def edge_triangles(self) -> dict:
        """Map sorted vertex pair -> list of incident triangle indices."""
        out: dict = {}
        for t, tri in enumerate(self.triangles.tolist()):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                out.setdefault((min(a, b), max(a, b)), []).append(t)
        return out

    @cached_property
    def dirichlet_nodes(self) -> np.ndarray:
        """Vertices touching any Dirichlet edge (tie-break: Dirichlet wins over gamma)."""
        return np.unique(self.dirichlet_edges.reshape(-1))

    def edge_lengths(self, edges: np.ndarray) -> np.ndarray:
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


def facet_measure(mesh: Mesh, tag: str) -> float:
    """Total length of the edges carrying ``tag``."""
    return float(mesh.edge_lengths(mesh.edges_with_tag(tag)).sum())


def validate(mesh: Mesh) -> list[str]:
    """Return a list of human-readable invariant violations (empty iff valid)."""
    report: list[str] = []
    n = mesh.n_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= n):
        report.append("triangle references a vertex index out of range")
        return report
    for arr, name in ((mesh.boundary_edges, "boundary edge"), (mesh.sigma_edges, "sigma edge")):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            report.append(f"{name} references a vertex index out of range")
            return report
    if len(mesh.regions) != mesh.n_triangles:
        report.append("region list length differs from triangle count")
    if len(mesh.boundary_tags) != len(mesh.boundary_edges):
        report.append("boundary tag list length differs from boundary edge count")
    if len(mesh.sigma_side1) != len(mesh.sigma_edges):
        report.append("sigma side-1 list length differs from sigma edge count")
        return report

    for t in np.flatnonzero(mesh.areas <= 0.0):
        report.append(f"triangle {t} is not positively oriented")

    edge_tris = mesh.edge_triangles
    tagged: dict = {}
    for i, ((a, b), tag) in enumerate(zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)):
        key = (min(a, b), max(a, b))
        if tag not in BOUNDARY_TAGS:
            report.append(f"boundary edge {i} has unknown tag {tag!r}")
        if len(edge_tris.get(key, [])) != 1:
            report.append(f"boundary edge {i} ({a}, {b}) is not adjacent to exactly one triangle")
        if key in tagged:
            report.append(f"boundary edge {i} ({a}, {b}) is tagged twice")
        tagged[key] = tag
    for i, ((a, b), side1) in enumerate(zip(mesh.sigma_edges.tolist(), mesh.sigma_side1.tolist())):
        key = (min(a, b), max(a, b))
        tris = edge_tris.get(key, [])
        if len(tris) != 2:
            report.append(f"sigma edge {i} ({a}, {b}): sigma edge not interior")
        elif side1 not in tris:
            report.append(f"sigma edge {i} ({a}, {b}): side-1 triangle {side1} is not incident")
        if key in tagged:
            report.append(f"sigma edge {i} ({a}, {b}) is also tagged as {tagged[key]}")
        tagged[key] = "sigma"
    for key, tris in edge_tris.items():
        if len(tris) == 1 and key not in tagged:
            report.append(f"boundary edge {key} carries no tag")
        if len(tris) > 2:
            report.append(f"edge {key} is shared by {len(tris)} triangles")

    report.extend(_duplicate_vertex_report(mesh))
    return report


def _duplicate_vertex_report(mesh: Mesh) -> list[str]:
    # Coincident vertices are only legal as the two copies of a slit: both on
    # the boundary and never sharing a triangle.
    if mesh.n_vertices < 2:
        return []
    scale = max(1.0, float(np.abs(mesh.vertices).max()))
    keys = np.round(mesh.vertices / (1e-12 * scale)).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() == 1:
        return []
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[mesh.boundary_edges.reshape(-1)] = True
    vert_tris: list[set] = [set() for _ in range(mesh.n_vertices)]
    for t, tri in enumerate(mesh.triangles.tolist()):
        for v in tri:
            vert_tris[v].add(t)
    report = []
    for group in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inverse == group).tolist()
        legal = all(on_boundary[v] for v in members) and all(
            not (vert_tris[a] & vert_tris[b])
            for i, a in enumerate(members) for b in members[i + 1:]
        )
        if not legal:
            report.append(f"duplicate vertices {members}")
    return report


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _on_grid(value: float, n: int) -> int:
    k = value * n
    if abs(k - round(k)) > 1e-9:
        raise MeshError(f"{value} is not on a grid line of a {n}-cell partition")
    return int(round(k))


def generate_rect_mesh(nx: int, ny: int, interface_y: float | None = None,
                       interface_extent: tuple = (0.0, 1.0),
                       gamma_spec=()) -> Mesh:
    """Crossed-triangle mesh of the unit square.

    Every grid cell is split into four right triangles meeting at the cell
    centre. With ``interface_y`` set, the horizontal grid edges on that line
    with abscissa inside ``interface_extent`` form the interface; triangles
    below it get region 0 and those above region 1. The interface normal
    points upwards (side 1 is the lower triangle).
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    gamma_spec = set(gamma_spec)
    unknown = gamma_spec - set(SIDES)
    if unknown:
        raise MeshError(f"unknown gamma sides {sorted(unknown)}")
    j_if = None
    if interface_y is not None:
        if not 0.0 < interface_y < 1.0:
            raise MeshError("interface_y must lie in (0, 1)")
        j_if = _on_grid(interface_y, ny)
        x0, x1 = interface_extent
        i0, i1 = _on_grid(x0, nx), _on_grid(x1, nx)
        if not 0 <= i0 < i1 <= nx:
            raise MeshError("interface_extent must be a nonempty sub-interval of [0, 1]")

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    corners = np.column_stack([gx.ravel(), gy.ravel()])
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]), indexing="xy")
    centres = np.column_stack([cx.ravel(), cy.ravel()])
    vertices = np.vstack([corners, centres])

    def v(i, j):
        return j * (nx + 1) + i

    triangles, regions = [], []
    bottom_tri = {}
    top_tri = {}
    for j in range(ny):
        for i in range(nx):
            c = len(corners) + j * nx + i
            sw, se, ne, nw = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            region = 0 if j_if is None or j < j_if else 1
            bottom_tri[(i, j)] = len(triangles)
            triangles.append((sw, se, c))
            triangles.append((se, ne, c))
            top_tri[(i, j)] = len(triangles)
            triangles.append((ne, nw, c))
            triangles.append((nw, sw, c))
            regions.extend([region] * 4)

    boundary_edges, tags = [], []
    for i in range(nx):
        boundary_edges.append((v(i, 0), v(i + 1, 0)))
        tags.append("gamma" if "bottom" in gamma_spec else "dirichlet")
        boundary_edges.append((v(i + 1, ny), v(i, ny)))
        tags.append("gamma" if "top" in gamma_spec else "dirichlet")
    for j in range(ny):
        boundary_edges.append((v(nx, j), v(nx, j + 1)))
        tags.append("gamma" if "right" in gamma_spec else "dirichlet")
        boundary_edges.append((v(0, j + 1), v(0, j)))
        tags.append("gamma" if "left" in gamma_spec else "dirichlet")

    sigma_edges, side1 = [], []
    if j_if is not None:
        for i in range(i0, i1):
            sigma_edges.append((v(i, j_if), v(i + 1, j_if)))
            side1.append(top_tri[(i, j_if - 1)])

    return Mesh(vertices, np.array(triangles), np.array(regions),
                np.array(boundary_edges).reshape(-1, 2), tags,
                np.array(sigma_edges, dtype=int).reshape(-1, 2), np.array(side1, dtype=int))


def generate_slit_disk(n_refine: int) -> Mesh:
    """Unit disk cut along the segment from the centre to (1, 0).

    Polar mesh whose rays at angle 0 and 2*pi are distinct vertex rows, so the
    slit appears as two Dirichlet boundaries. The outer circle is ``gamma``.
    """
    if n_refine < 0:
        raise MeshError("n_refine must be nonnegative")
    n_rings = 2 ** (n_refine + 1)
    n_theta = 8 * 2 ** n_refine
    radii = np.arange(1, n_rings + 1) / n_rings
    angles = 2.0 * math.pi * np.arange(n_theta + 1) / n_theta

    vertices = [(0.0, 0.0)]
    for r in radii:
        for a in angles:
            vertices.append((r * math.cos(a), r * math.sin(a)))
    vertices = np.array(vertices)
    # exact zeros on the slit so both copies coincide bitwise
    vertices[np.abs(vertices) < 1e-15] = 0.0

    def v(k, j):  # ring k >= 1, angle index j in [0, n_theta]
        return 1 + (k - 1) * (n_theta + 1) + j

    triangles = []
    for j in range(n_theta):
        triangles.append((0, v(1, j), v(1, j + 1)))
    for k in range(1, n_rings):
        for j in range(n_theta):
            a, b, c, d = v(k, j), v(k + 1, j), v(k + 1, j + 1), v(k, j + 1)
            if (j + k) % 2:
                triangles.extend([(a, b, c), (a, c, d)])
            else:
                triangles.extend([(a, b, d), (b, c, d)])

    boundary_edges, tags = [], []
    for j in range(n_theta):
        boundary_edges.append((v(n_rings, j), v(n_rings, j + 1)))
        tags.append("gamma")
    boundary_edges.append((v(1, 0), 0))
    tags.append("dirichlet")
    boundary_edges.append((0, v(1, n_theta)))
    tags.append("dirichlet")
    for k in range(1, n_rings):
        boundary_edges.append((v(k + 1, 0), v(k, 0)))
        tags.append("dirichlet")
        boundary_edges.append((v(k, n_theta), v(k + 1, n_theta)))
        tags.append("dirichlet")
    return Mesh(vertices, np.array(triangles), np.zeros(len(triangles), dtype=int),
                np.array(boundary_edges), tags)


# ---------------------------------------------------------------------------
# ASCII format
# ---------------------------------------------------------------------------

HEADER = "dynbc-mesh 1"


def save_mesh(mesh: Mesh) -> str:
    lines = [HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions.tolist())]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    lines.append(f"sigma_edges {len(mesh.sigma_edges)}")
    lines += [f"{i} {j} {s}" for (i, j), s in zip(mesh.sigma_edges.tolist(), mesh.sigma_side1.tolist())]
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> Mesh:
    """Parse the line-oriented ASCII mesh format and validate the result."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows or " ".join(rows[0][1]) != HEADER:
        raise MeshError(f"line {rows[0][0] if rows else 1}: expected header {HEADER!r}")

    sections = {"vertices": (2, float), "triangles": (4, int),
                "boundary_edges": (3, None), "sigma_edges": (3, int)}
    data: dict = {}
    pos = 1
    while pos < len(rows):
        lineno, tokens = rows[pos]
        if len(tokens) != 2 or tokens[0] not in sections:
            raise MeshError(f"line {lineno}: expected a section header, got {' '.join(tokens)!r}")
        name = tokens[0]
        if name in data:
            raise MeshError(f"line {lineno}: section {name!r} repeated")
        try:
            count = int(tokens[1])
        except ValueError:
            raise MeshError(f"line {lineno}: bad count {tokens[1]!r}") from None
        width, conv = sections[name]
        entries = []
        for k in range(count):
            pos += 1
            if pos >= len(rows):
                raise MeshError(f"section {name!r} ends early: expected {count} lines")
            lineno, tokens = rows[pos]
            if len(tokens) != width:
                raise MeshError(f"line {lineno}: expected {width} fields in {name!r}, got {len(tokens)}")
            try:
                if name == "boundary_edges":
                    entries.append((int(tokens[0]), int(tokens[1]), tokens[2]))
                else:
                    entries.append(tuple(conv(t) for t in tokens))
            except ValueError:
                raise MeshError(f"line {lineno}: malformed entry {' '.join(tokens)!r}") from None
        data[name] = (entries, lineno)
        pos += 1
    for name in ("vertices", "triangles"):
        if name not in data:
            raise MeshError(f"missing section {name!r}")

    verts = np.array(data["vertices"][0], dtype=float).reshape(-1, 2)
    tris = np.array([e[:3] for e in data["triangles"][0]], dtype=int).reshape(-1, 3)
    regions = np.array([e[3] for e in data["triangles"][0]], dtype=int)
    bnd = data.get("boundary_edges", ([], 0))[0]
    for lineno_entry in bnd:
        if lineno_entry[2] not in BOUNDARY_TAGS:
            raise MeshError(f"inconsistent tags: unknown boundary tag {lineno_entry[2]!r}")
    sig = data.get("sigma_edges", ([], 0))[0]
    n = len(verts)
    for name, arr in (("triangles", tris), ("boundary_edges", np.array([e[:2] for e in bnd], dtype=int)),
                      ("sigma_edges", np.array([e[:2] for e in sig], dtype=int))):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise MeshError(f"dangling vertex index in section {name!r}")
    if sig and max(e[2] for e in sig) >= len(tris):
        raise MeshError("dangling triangle index in section 'sigma_edges'")

    mesh = Mesh(verts, tris, regions,
                np.array([e[:2] for e in bnd], dtype=int).reshape(-1, 2), [e[2] for e in bnd],
                np.array([e[:2] for e in sig], dtype=int).reshape(-1, 2),
                np.array([e[2] for e in sig], dtype=int))
    problems = validate(mesh)
    if problems:
        raise MeshError("; ".join(problems))
    return mesh


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        return load_mesh(fh.read())


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(save_mesh(mesh))
