"""Matplotlib figures for run reports (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def accuracy_vs_fraction(curves: dict[str, dict[float, float]], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, acc in curves.items():
        f = sorted(acc)
        ax.plot([100 * x for x in f], [100 * acc[x] for x in f], marker="o", label=label)
    ax.set_xlabel("portion of gait cycle (%)")
    ax.set_ylabel("sequence accuracy (%)")
    ax.set_ylim(0, 102)
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def fitness_trace(trace, generation_best, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    g = np.arange(1, len(trace) + 1)
    ax.plot(g, trace, marker="o", label="best so far")
    ax.plot(g, generation_best, marker=".", linestyle="--", label="generation best")
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def mask_overlay(mask, path, template=None) -> Path:
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    if template is not None:
        ax.imshow(template, cmap="gray", vmin=0, vmax=1)
        ax.imshow(np.ma.masked_where(np.asarray(mask) > 0, np.ones_like(mask)), cmap="autumn", alpha=0.5)
    else:
        ax.imshow(mask, cmap="gray", vmin=0, vmax=1)
    ax.set_axis_off()
    return _save(fig, path)


def roc_curves(curves: dict[str, list[tuple[float, float]]], path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    for label, pts in curves.items():
        p = sorted(pts)
        ax.plot([a for a, _ in p], [b for _, b in p], label=label)
    ax.set_xscale("symlog", linthresh=1e-3)
    ax.set_xlabel("FAR")
    ax.set_ylabel("1 - FRR")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    return _save(fig, path)


def rates_vs_population(rows: list[dict], path, keys=("frr", "far_mean", "aer")) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    n = [r["n"] for r in rows]
    for k in keys:
        ax.plot(n, [np.nan if r.get(k) is None else r[k] for r in rows], marker="o", label=k)
    ax.set_xlabel("authorized subjects n")
    ax.set_ylabel("rate")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def view_boundaries(grid, points, labels, path) -> Path:
    g = np.asarray(grid, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(g[:, 0], g[:, 1], c=g[:, 2], s=4, cmap="viridis", marker="s", alpha=0.35)
    pts = np.asarray(points, dtype=float)
    ax.scatter(pts[:, 0], pts[:, 1], c=labels, s=10, cmap="viridis", edgecolors="k", linewidths=0.3)
    fig.colorbar(sc, ax=ax, label="view angle")
    ax.set_xlabel("m_P")
    ax.set_ylabel("m_Q")
    return _save(fig, path)


def ccr_bars(ccr: dict[str, float], path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    names = list(ccr)
    ax.bar(names, [100 * ccr[k] for k in names])
    ax.set_ylabel("CCR (%)")
    ax.set_ylim(0, 100)
    return _save(fig, path)
