"""Matplotlib figures for scenarios, KPI comparisons and traversals (optional dependency)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def draw_roundabout(ax, geom):
    for r in (geom.inner_radius, geom.outer_radius):
        ax.add_patch(plt.Circle(geom.center, r, fill=False, color="0.6", lw=1))
    ax.set_aspect("equal")


def plot_scenario(ax, positions, geom=None, title=None):
    """Both vehicles, shaded light to dark over time."""
    t = np.linspace(0, 1, len(positions))
    if geom is not None:
        draw_roundabout(ax, geom)
    ax.scatter(positions[:, 0], positions[:, 1], c=t, cmap="Blues", s=4, label="vehicle 1")
    ax.scatter(positions[:, 2], positions[:, 3], c=t, cmap="Oranges", s=4, label="vehicle 2")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    return ax


def plot_pet_comparison(comparison, labels=("original", "generated")):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    width = np.diff(comparison.edges)
    ax1.bar(comparison.edges[:-1], comparison.counts_a, width=width, align="edge", alpha=0.6,
            label=labels[0])
    ax1.bar(comparison.edges[:-1], comparison.counts_b, width=width, align="edge", alpha=0.6,
            label=labels[1])
    ax1.set_xlabel("PET [s]")
    ax1.set_ylabel("count")
    ax1.legend()
    for label, name in zip(("a", "b"), labels):
        pts = [(p, t) for s, _, p, t in comparison.scatter if s == label and p is not None and t is not None]
        if pts:
            p, t = zip(*pts)
            ax2.scatter(p, t, s=8, alpha=0.6, label=name)
    ax2.set_xlabel("PET [s]")
    ax2.set_ylabel("minimum TTC [s]")
    ax2.legend()
    fig.tight_layout()
    return fig


def plot_traversal(grid, geom=None):
    n = len(grid)
    fig, axes = plt.subplots(2, n, figsize=(3.2 * n, 6.4))
    for k in range(n):
        plot_scenario(axes[0, k], grid.scenarios[k], geom, title=f"z[{grid.dimension_index}] = {grid.values[k]:+.1f}")
        axes[1, k].plot(grid.speeds[k, :, 0], label="vehicle 1")
        axes[1, k].plot(grid.speeds[k, :, 1], label="vehicle 2")
        axes[1, k].set_xlabel("step")
        axes[1, k].set_ylabel("speed [m/s]")
    axes[1, 0].legend()
    fig.tight_layout()
    return fig


def save_report_figures(directory, comparison=None, grids=(), geom=None):
    d = Path(directory)
    written = []
    if comparison is not None:
        fig = plot_pet_comparison(comparison)
        fig.savefig(d / "pet_comparison.png", dpi=120)
        plt.close(fig)
        written.append(d / "pet_comparison.png")
    for grid in grids:
        fig = plot_traversal(grid, geom)
        path = d / f"traversal_dim{grid.dimension_index}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
