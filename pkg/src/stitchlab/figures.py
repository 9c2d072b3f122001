"""Figure emitters: SVG line/bar plots, grayscale heatmaps, trajectory overlays."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .gridworld import GridGeometry


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def line_plot(path, series: dict, xlabel: str, ylabel: str, bands: dict | None = None, logx=False):
    """One line per entry of series {label: (x, y)}; optional {label: err} bands."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for label, (x, y) in series.items():
        (line,) = ax.plot(x, y, marker="o", ms=3, label=label)
        if bands and label in bands:
            err = np.asarray(bands[label])
            ax.fill_between(x, np.asarray(y) - err, np.asarray(y) + err, alpha=0.2, color=line.get_color())
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def bar_plot(path, labels, values, errs=None, ylabel: str = ""):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    xs = np.arange(len(labels))
    ax.bar(xs, values, yerr=errs, capsize=3)
    ax.set_xticks(xs, labels, rotation=20, fontsize=8)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)


def heatmap(path, matrix: np.ndarray, xlabel: str = "denoising step", ylabel: str = "sequence index"):
    """Grayscale raster of a [T x H] map; pixel (t, i) encodes matrix[t, i]."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.imshow(np.asarray(matrix).T, aspect="auto", cmap="gray", origin="lower")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    _finish(fig, path)


def trajectory_overlay(path, trajectories, geometry: GridGeometry, title: str = ""):
    """Lava grid with one polyline per trajectory."""
    fig, ax = plt.subplots(figsize=(4, 4))
    w = geometry.street_half_width
    for (i, j) in geometry.pit_cells:
        x0 = i * geometry.spacing + w
        y0 = j * geometry.spacing + w
        side = geometry.spacing - 2 * w
        ax.add_patch(plt.Rectangle((x0, y0), side, side, color="0.85"))
    for traj in trajectories:
        traj = np.asarray(traj)
        ax.plot(traj[:, 0], traj[:, 1], lw=0.8, alpha=0.8)
    ax.set_xlim(-0.3, geometry.side + 0.3)
    ax.set_ylim(geometry.side + 0.3, -0.3)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title, fontsize=9)
    _finish(fig, path)
