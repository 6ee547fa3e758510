"""Synthetic low-rank, self-similar hyperspectral cubes and noise simulation."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .cube import HsiCube


def smooth_spectra(B: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """``B x K`` orthonormal basis of smooth spectra whose span contains the flat spectrum."""
    t = np.linspace(0.0, 1.0, B)
    cols = [np.ones(B)]
    for _ in range(K - 1):
        centers = rng.uniform(-0.1, 1.1, size=3)
        widths = rng.uniform(0.08, 0.35, size=3)
        heights = rng.normal(size=3)
        cols.append(sum(h * np.exp(-((t - c) ** 2) / (2 * w**2)) for h, c, w in zip(heights, centers, widths)))
    Q, R = np.linalg.qr(np.stack(cols, axis=1))
    if np.linalg.matrix_rank(R) < K:
        # degenerate draw (tiny B): complete with random directions
        Q, _ = np.linalg.qr(np.hstack((Q, rng.normal(size=(B, K)))))
        Q = Q[:, :K]
    return Q


def _shapes_layer(M: int, N: int, rng: np.random.Generator, count: int, rmin: float, rmax: float, edge_blur: float) -> np.ndarray:
    """Random constant-level disks and rectangles with slightly softened edges."""
    img = np.zeros((M, N))
    yy, xx = np.mgrid[:M, :N]
    for _ in range(count):
        level = rng.normal()
        cy, cx = rng.uniform(0, M), rng.uniform(0, N)
        r = rng.uniform(rmin, rmax)
        if rng.random() < 0.5:
            region = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            h, w = rng.uniform(rmin, rmax, size=2)
            region = (np.abs(yy - cy) < h) & (np.abs(xx - cx) < w)
        img[region] = level
    return gaussian_filter(img, edge_blur)


def self_similar_field(
    M: int,
    N: int,
    smoothness: float,
    rng: np.random.Generator,
    tile: int = 16,
    jitter: int = 2,
    n_shapes: int = 8,
    edge_blur: float = 0.8,
) -> np.ndarray:
    """Unit-variance abundance-like field with non-local self-similarity.

    Sum of three equally weighted parts: a smooth random background (Gaussian
    filter of width ``smoothness``), piecewise-constant regions, and a motif
    of ``tile x tile`` pixels repeated over the image with random shifts of
    up to ``jitter`` pixels.
    """
    base = gaussian_filter(rng.normal(size=(M, N)), smoothness, mode="wrap")
    regions = _shapes_layer(M, N, rng, n_shapes, 3.0, 10.0, edge_blur)
    motif = _shapes_layer(tile, tile, rng, 2, 2.0, 5.0, edge_blur)
    reps = (-(-M // tile) + 1, -(-N // tile) + 1)
    tiled = np.zeros((reps[0] * tile, reps[1] * tile))
    for i in range(reps[0]):
        for j in range(reps[1]):
            shift = rng.integers(-jitter, jitter + 1, size=2) if jitter else (0, 0)
            tiled[i * tile : (i + 1) * tile, j * tile : (j + 1) * tile] = np.roll(motif, shift, axis=(0, 1))
    tiled = tiled[:M, :N]
    field = sum(part / (part.std() + 1e-12) for part in (base, regions, tiled))
    return (field - field.mean()) / (field.std() + 1e-12)


def synth_lowrank_hsi(
    M: int = 64,
    N: int = 64,
    B: int = 31,
    K_true: int = 6,
    smoothness: float = 8.0,
    seed: int = 0,
    decay: float = 0.6,
    value_scale: float = 255.0,
) -> HsiCube:
    """Clean ``M x N x B`` cube of exact spectral rank ``K_true`` normalized to ``[0, value_scale]``.

    Coefficient images are self-similar fields (see :func:`self_similar_field`)
    whose amplitudes decay geometrically by ``decay`` per component, mimicking
    the fast-decaying spectral energy of real scenes. ``smoothness`` is the
    width in pixels of the smooth background component.
    """
    if not 1 <= K_true <= B:
        raise ValueError(f"K_true={K_true} must lie in [1, {B}]")
    rng = np.random.default_rng(seed)
    A = smooth_spectra(B, K_true, rng)
    coeffs = np.empty((K_true, M, N))
    for k in range(K_true):
        coeffs[k] = self_similar_field(M, N, smoothness, rng) * decay**k
    X = A @ coeffs.reshape(K_true, -1)
    lo, hi = X.min(), X.max()
    if hi - lo <= 0:
        X = np.zeros_like(X)
    else:
        # subtracting a constant stays inside span(A), which holds the flat spectrum
        X = (X - lo) * (value_scale / (hi - lo))
    return HsiCube(X.reshape(B, M, N), value_scale)


def add_gaussian_noise(cube: HsiCube, sigma: float, seed: int = 0) -> HsiCube:
    """``cube + N(0, sigma^2)`` i.i.d. with a seeded generator."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return cube.with_data(cube.data.copy())
    rng = np.random.default_rng(seed)
    return cube.with_data(cube.data + sigma * rng.standard_normal(cube.data.shape))
