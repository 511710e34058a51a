"""Figures written next to the CSV and JSON outputs (Agg backend, PNG)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

FIG_WIDTH = 5.0
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
RC = {"font.size": 9, "axes.spines.top": False, "axes.spines.right": False,
      "savefig.dpi": 120, "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN)}


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_field(mesh, values, path, title: str = "u", sigma=True) -> None:
    """Filled contour of a nodal field with gamma edges and the interface overlaid."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_WIDTH))
        tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        tpc = ax.tripcolor(tri, np.asarray(values, float), shading="gouraud", cmap="viridis")
        fig.colorbar(tpc, ax=ax, shrink=0.8)
        for edges, style in ((mesh.gamma_edges, "C1-"), (mesh.sigma_edges if sigma else (), "w--")):
            for a, b in edges:
                p = mesh.vertices[[a, b]]
                ax.plot(p[:, 0], p[:, 1], style, lw=1.5)
        ax.set_aspect("equal")
        ax.set_title(title)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        _save(fig, path)


def plot_series(t, series: dict, path, ylabel: str = "norm", logy: bool = False, marker_at=None) -> None:
    """Time series on shared axes; ``marker_at`` draws a vertical line (e.g. at T*)."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for name, values in series.items():
            ax.plot(t, values, label=name, lw=1.2)
        if marker_at is not None:
            ax.axvline(marker_at, color="k", ls=":", lw=1)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_convergence(rows: list[dict], path) -> None:
    """Log-log error against h with reference slopes 1 and 2."""
    h = np.array([r["h"] for r in rows])
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for key, label in (("l2", "L2 error"), ("h1", "H1 seminorm error")):
            e = np.array([r[key] for r in rows])
            ax.loglog(h, e, "o-", label=label)
            order = 2 if key == "l2" else 1
            ax.loglog(h, e[0] * (h / h[0]) ** order, "k:", lw=0.8)
        ax.set_xlabel("h")
        ax.set_ylabel("error at T")
        ax.legend(frameon=False)
        _save(fig, path)

