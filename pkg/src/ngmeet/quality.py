"""Image quality indices: band-mean PSNR, band-mean SSIM and spectral angle (SAM)."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .cube import DimensionError, HsiCube


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    sam_degrees: float
    psnr_bands: list
    ssim_bands: list
    sam_skipped_pixels: int = 0
    ssim_fallback: bool = False

    @property
    def psnr_infinite(self) -> bool:
        return math.isinf(self.psnr_db)

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no infinity literal
        d["psnr_db"] = None if self.psnr_infinite else self.psnr_db
        d["psnr_bands"] = [None if math.isinf(v) else v for v in self.psnr_bands]
        d["psnr_infinite"] = self.psnr_infinite
        return d


def _pair(x, ref):
    xa = x.data if isinstance(x, HsiCube) else np.asarray(x, dtype=np.float64)
    ra = ref.data if isinstance(ref, HsiCube) else np.asarray(ref, dtype=np.float64)
    if xa.shape != ra.shape:
        raise DimensionError(f"shape mismatch {xa.shape} vs {ra.shape}")
    if xa.ndim == 2:
        xa, ra = xa[None], ra[None]
    return xa, ra


def psnr_bands(x, ref, peak: float = 255.0) -> np.ndarray:
    """PSNR of every band in dB; ``inf`` where the band is reproduced exactly."""
    xa, ra = _pair(x, ref)
    mse = np.mean((xa - ra) ** 2, axis=(1, 2))
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(peak**2 / mse)


def psnr(x, ref, peak: float = 255.0) -> float:
    """Arithmetic mean of the per-band PSNR."""
    return float(np.mean(psnr_bands(x, ref, peak)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r : img.shape[0] - r, r : img.shape[1] - r]


def ssim_band(x: np.ndarray, ref: np.ndarray, data_range: float = 255.0, window: int = 11, sigma: float = 1.5) -> tuple[float, bool]:
    """SSIM of one 2-D band with a Gaussian window; returns ``(value, used_fallback)``.

    Only window positions fully inside the image contribute. Images smaller
    than the window fall back to a single global-statistics SSIM.
    """
    C1 = (0.01 * data_range) ** 2
    C2 = (0.03 * data_range) ** 2
    if min(x.shape) < window:
        mx, my = x.mean(), ref.mean()
        vx, vy = x.var(), ref.var()
        cxy = np.mean((x - mx) * (ref - my))
        val = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx**2 + my**2 + C1) * (vx + vy + C2))
        return float(val), True
    g = _gaussian_window(window, sigma)
    mx = _filter_valid(x, g)
    my = _filter_valid(ref, g)
    sxx = _filter_valid(x * x, g) - mx**2
    syy = _filter_valid(ref * ref, g) - my**2
    sxy = _filter_valid(x * ref, g) - mx * my
    smap = ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx**2 + my**2 + C1) * (sxx + syy + C2))
    return float(smap.mean()), False


def ssim_bands(x, ref, data_range: float = 255.0) -> tuple[np.ndarray, bool]:
    xa, ra = _pair(x, ref)
    vals, fallback = [], False
    for xb, rb in zip(xa, ra):
        v, f = ssim_band(xb, rb, data_range)
        vals.append(v)
        fallback |= f
    if fallback:
        warnings.warn("image smaller than the SSIM window; using global statistics", stacklevel=2)
    return np.array(vals), fallback


def ssim(x, ref, data_range: float = 255.0) -> float:
    """Mean SSIM over bands."""
    return float(np.mean(ssim_bands(x, ref, data_range)[0]))


def sam(x, ref, return_skipped: bool = False):
    """Mean spectral angle in degrees over pixels; zero-norm pixels are skipped."""
    xa, ra = _pair(x, ref)
    X = xa.reshape(xa.shape[0], -1)
    R = ra.reshape(ra.shape[0], -1)
    nx = np.linalg.norm(X, axis=0)
    nr = np.linalg.norm(R, axis=0)
    ok = (nx > 0) & (nr > 0)
    u = X[:, ok] / nx[ok]
    v = R[:, ok] / nr[ok]
    # half-angle form stays accurate near 0 and 180 degrees, unlike arccos of the cosine
    ang = np.degrees(2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0)))
    value = float(ang.mean()) if ang.size else 0.0
    skipped = int((~ok).sum())
    return (value, skipped) if return_skipped else value


def evaluate(x: HsiCube, ref: HsiCube, peak: float | None = None) -> MetricReport:
    """All three indices of ``x`` against the reference ``ref``."""
    peak = ref.value_scale if peak is None else peak
    pb = psnr_bands(x, ref, peak)
    sb, fallback = ssim_bands(x, ref, peak)
    s, skipped = sam(x, ref, return_skipped=True)
    return MetricReport(
        psnr_db=float(np.mean(pb)),
        ssim=float(np.mean(sb)),
        sam_degrees=s,
        psnr_bands=[float(v) for v in pb],
        ssim_bands=[float(v) for v in sb],
        sam_skipped_pixels=skipped,
        ssim_fallback=fallback,
    )
