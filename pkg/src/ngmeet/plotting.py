"""Report figures rendered to image files with matplotlib's non-interactive backend."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cube import HsiCube  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_iterations(records: Sequence[dict], path) -> Path:
    """PSNR (when available), noise level and rank against the iteration index.

    ``records`` are iteration dicts as stored in a run report.
    """
    it = [r["iteration"] for r in records]
    have_psnr = any(r.get("psnr") is not None for r in records)
    panels = [("sigma", "noise std $\\sigma_i$"), ("rank", "rank $K$"), ("rel_change", "relative change")]
    if have_psnr:
        panels.insert(0, ("psnr", "PSNR (dB)"))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.0))
    for ax, (key, label) in zip(np.atleast_1d(axes), panels):
        vals = [np.nan if r.get(key) is None else r[key] for r in records]
        ax.plot(it, vals, marker="o")
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        if key == "rel_change" and np.nanmin(np.asarray(vals, dtype=float), initial=np.inf) > 0:
            ax.set_yscale("log")
        ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_stage_times(rows: Sequence[dict], path) -> Path:
    """Stage A / stage B / total time against the number of bands (band-scaling study)."""
    bands = [r["bands"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for key, label in (("stage_a", "stage A (spectral)"), ("stage_b", "stage B (non-local)"), ("total", "total")):
        ax.plot(bands, [r[key] for r in rows], marker="o", label=label)
    ax.set_xlabel("bands B")
    ax.set_ylabel("seconds")
    ax.set_xticks(bands)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_bands(cubes: Sequence[HsiCube], titles: Sequence[str], band: int, path, vmax: Optional[float] = None) -> Path:
    """Side-by-side grayscale views of one band of several cubes."""
    fig, axes = plt.subplots(1, len(cubes), figsize=(3.0 * len(cubes), 3.2))
    for ax, cube, title in zip(np.atleast_1d(axes), cubes, titles):
        hi = cube.value_scale if vmax is None else vmax
        ax.imshow(cube.data[band], cmap="gray", vmin=0, vmax=hi)
        ax.set_title(title)
        ax.axis("off")
    return _save(fig, path)


def plot_band_metrics(metrics: dict, path) -> Path:
    """Per-band PSNR and SSIM curves from a metric dict."""
    psnr = [np.nan if v is None else v for v in metrics["psnr_bands"]]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 3.0))
    a1.plot(psnr, marker=".")
    a1.set_xlabel("band")
    a1.set_ylabel("PSNR (dB)")
    a2.plot(metrics["ssim_bands"], marker=".")
    a2.set_xlabel("band")
    a2.set_ylabel("SSIM")
    for ax in (a1, a2):
        ax.grid(alpha=0.3)
    return _save(fig, path)
