"""Band-scaling benchmark: stage timings of a denoising run as the band count grows."""

from __future__ import annotations

import statistics
from typing import Sequence

from .pipeline import NgmeetConfig, RestorationTask, ngmeet_run
from .synthetic import add_gaussian_noise, synth_lowrank_hsi


def band_scaling(
    bands: Sequence[int] = (32, 64, 128),
    rows: int = 64,
    cols: int = 64,
    sigma: float = 50.0,
    rank: int = 4,
    repeats: int = 3,
    seed: int = 0,
    config: NgmeetConfig | None = None,
) -> list[dict]:
    """Median stage times over ``repeats`` denoising runs per band count.

    Every run starts from the same fixed rank (``rank_init="fixed"``) so the
    reduced image, and hence the non-local stage, has identical size for all
    band counts; only the spectral stage sees ``B``. Returns one row per band
    count with ``stage_a``, ``stage_b``, ``latent`` and ``total`` seconds
    (summed over iterations) plus the final rank.
    """
    base = config.to_dict() if config is not None else NgmeetConfig().to_dict()
    base.update(rank_init="fixed", fixed_rank=rank, seed=seed)
    cfg = NgmeetConfig.from_dict(base)
    rows_out = []
    for B in bands:
        clean = synth_lowrank_hsi(rows, cols, B, K_true=min(6, B), seed=seed)
        noisy = add_gaussian_noise(clean, sigma, seed=seed + 1)
        task = RestorationTask.denoise(noisy, sigma)
        samples = {"stage_a": [], "stage_b": [], "latent": [], "total": []}
        final_rank = None
        for _ in range(repeats):
            res = ngmeet_run(task, cfg)
            samples["stage_a"].append(res.log.stage_a_total)
            samples["stage_b"].append(res.log.stage_b_total)
            samples["latent"].append(float(sum(res.log.column("time_latent"))))
            samples["total"].append(res.total_time)
            final_rank = res.log.records[-1].rank
        row = {"bands": B, "rows": rows, "cols": cols, "iterations": len(res.log), "final_rank": final_rank}
        row.update({k: statistics.median(v) for k, v in samples.items()})
        rows_out.append(row)
    return rows_out


def scaling_summary(rows: Sequence[dict]) -> dict:
    """Spread of stage-B time and total time relative to the smallest band count."""
    sb = [r["stage_b"] for r in rows]
    first = min(rows, key=lambda r: r["bands"])
    return {
        "stage_b_spread": (max(sb) - min(sb)) / min(sb),
        "total_ratio_max": max(r["total"] for r in rows) / first["total"],
    }
