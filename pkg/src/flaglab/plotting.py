"""Figures for pipeline reports, rendered off-screen to PNG.

PNG metadata is pinned so reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .group import Backend  # noqa: E402
from .harmonics import synthesize  # noqa: E402

__all__ = ["plot_decay", "plot_density", "plot_sweep"]

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _decay_points(report):
    ks = np.array(sorted(report.block_norms))
    norms = np.array([report.block_norms[k] for k in ks])
    keep = norms > 0
    return ks[keep], norms[keep]


def plot_decay(report, path: Path, label: str | None = None) -> Path:
    """log2 of the block norms against the block index, with the fitted line."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ks, norms = _decay_points(report)
    ax.plot(ks, np.log2(norms), "o", color="0.6", label="all blocks")
    if report.slope is not None:
        fit = np.array(report.fit_blocks)
        ax.plot(fit, np.log2([report.block_norms[k] for k in fit]), "o", color="C0",
                label="fitted")
        ax.plot(fit, report.intercept + report.slope * fit, "-", color="C1",
                label=f"slope {report.slope:.3f}")
    ax.set_xlabel("block k")
    ax.set_ylabel(r"$\log_2 \|P_k g\|_2$")
    if label:
        ax.set_title(label)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(reports: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for i, (eps, rep) in enumerate(sorted(reports.items(), reverse=True)):
        ks, norms = _decay_points(rep)
        slope = "n/a" if rep.slope is None else f"{rep.slope:.2f}"
        ax.plot(ks, np.log2(norms), "o-", color=f"C{i}", ms=3,
                label=f"eps={eps:g}, slope {slope}")
    ax.set_xlabel("block k")
    ax.set_ylabel(r"$\log_2 \|P_k g\|_2$")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_density(density, path: Path, resolution: int = 200) -> Path:
    """The density on the circle (line plot) or the sphere (equirectangular map)."""
    u = density.coefficients
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if u.backend is Backend.SL2R:
        th = np.linspace(0, np.pi, 4 * resolution)
        ax.plot(th, np.real(synthesize(u, th[:, None])), color="C0")
        ax.axhline(1.0, color="0.7", lw=0.8)
        ax.set_xlabel(r"$\theta$")
        ax.set_ylabel("density")
    else:
        lon = np.linspace(-np.pi, np.pi, 2 * resolution)
        lat = np.linspace(-np.pi / 2, np.pi / 2, resolution)
        LON, LAT = np.meshgrid(lon, lat)
        pts = np.column_stack([(np.cos(LAT) * np.cos(LON)).ravel(),
                               (np.cos(LAT) * np.sin(LON)).ravel(), np.sin(LAT).ravel()])
        vals = np.real(synthesize(u, pts)).reshape(LAT.shape)
        im = ax.pcolormesh(LON, LAT, vals, shading="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, label="density")
        ax.set_xlabel("longitude")
        ax.set_ylabel("latitude")
    fig.tight_layout()
    return _save(fig, path)
