"""Non-local patch grouping on the reduced image.

A patch is an ``n x n x K`` block addressed by its top-left pixel. Vectorized
patches use the layout ``(row offset, col offset, channel)`` in C order, so a
group of ``p`` patches becomes an ``(n*n*K) x p`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cube import DimensionError, HsiCube


@dataclass(frozen=True)
class PatchGeometry:
    """Patch size ``n``, reference stride ``s``, search half-window ``w`` and group size ``p``."""

    patch_size: int = 6
    stride: int = 4
    search_radius: int = 20
    group_size: int = 50

    def __post_init__(self):
        if self.patch_size < 1 or self.stride < 1 or self.group_size < 1 or self.search_radius < 0:
            raise ValueError(f"invalid patch geometry {self}")

    @classmethod
    def for_noise_level(cls, sigma: float, **overrides) -> "PatchGeometry":
        """Default geometry with the group size picked from the noise std (255 scale)."""
        if sigma >= 50:
            p = 70
        elif sigma >= 30:
            p = 60
        else:
            p = 50
        overrides.setdefault("group_size", p)
        return cls(**overrides)


@dataclass(frozen=True, eq=False)
class PatchGroupSet:
    """Reference positions ``(T, 2)`` and matched group positions ``(T, p, 2)``.

    ``groups[j, 0]`` is always the reference patch itself.
    """

    references: np.ndarray
    groups: np.ndarray
    patch_size: int

    @property
    def num_groups(self) -> int:
        return self.groups.shape[0]

    @property
    def group_size(self) -> int:
        return self.groups.shape[1]


def _axis_positions(length: int, n: int, s: int) -> list[int]:
    # a stride wider than the patch would leave gaps, so it is capped at n
    s = min(s, n)
    last = length - n
    pos = list(range(0, last + 1, s))
    if pos[-1] != last:
        pos.append(last)
    return pos


def tile_references(M: int, N: int, geom: PatchGeometry) -> np.ndarray:
    """Reference patch corners on a stride-``s`` grid that always includes the last row/column.

    Strides larger than the patch size are reduced to the patch size so that
    every pixel is covered by at least one reference patch.
    """
    n = geom.patch_size
    if n > min(M, N):
        raise ValueError(f"patch size {n} exceeds image size {M}x{N}")
    rows = _axis_positions(M, n, geom.stride)
    cols = _axis_positions(N, n, geom.stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack((rr.ravel(), cc.ravel()), axis=1)


def patch_array(data: np.ndarray, n: int) -> np.ndarray:
    """All ``n x n`` patches of a ``(K, M, N)`` array as ``(M-n+1, N-n+1, n*n*K)``."""
    K, M, N = data.shape
    win = sliding_window_view(data, (n, n), axis=(1, 2))  # (K, M', N', n, n)
    return np.ascontiguousarray(win.transpose(1, 2, 3, 4, 0)).reshape(M - n + 1, N - n + 1, n * n * K)


def _search_bounds(r: int, c: int, w: int, Mp: int, Np: int):
    return max(0, r - w), min(Mp - 1, r + w), max(0, c - w), min(Np - 1, c + w)


def match_groups(m_bar: HsiCube, geom: PatchGeometry) -> PatchGroupSet:
    """k-NN block matching of every reference patch inside its search window.

    For each reference, returns the ``p`` window patches with the smallest
    squared Euclidean distance over the full ``n x n x K`` block. Ties are
    broken by raster order, and the reference is always placed first. When a
    search window holds fewer than ``p`` candidates, every group is shortened
    to the smallest window population so all groups have equal size.
    """
    n, w = geom.patch_size, geom.search_radius
    refs = tile_references(m_bar.rows, m_bar.cols, geom)
    P = patch_array(m_bar.data, n)
    Mp, Np = P.shape[:2]
    counts = []
    for r, c in refs:
        r0, r1, c0, c1 = _search_bounds(r, c, w, Mp, Np)
        counts.append((r1 - r0 + 1) * (c1 - c0 + 1))
    p = min(geom.group_size, min(counts))
    groups = np.empty((len(refs), p, 2), dtype=np.int64)
    for j, (r, c) in enumerate(refs):
        r0, r1, c0, c1 = _search_bounds(r, c, w, Mp, Np)
        window = P[r0 : r1 + 1, c0 : c1 + 1]
        diff = window - P[r, c]
        dist = np.einsum("ijk,ijk->ij", diff, diff).ravel()
        width = c1 - c0 + 1
        ref_flat = (r - r0) * width + (c - c0)
        dist[ref_flat] = -1.0
        order = np.argsort(dist, kind="stable")[:p]
        groups[j, :, 0] = r0 + order // width
        groups[j, :, 1] = c0 + order % width
    return PatchGroupSet(refs, groups, n)


def _check_positions(groups: np.ndarray, n: int, M: int, N: int):
    if groups.size and (groups.min() < 0 or groups[..., 0].max() > M - n or groups[..., 1].max() > N - n):
        raise DimensionError("patch position out of bounds")


def gather_group(m_bar: HsiCube, positions, patch_size: int) -> np.ndarray:
    """Stack the patches at ``positions`` (``p x 2``) as columns of an ``(n*n*K) x p`` matrix."""
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    n = patch_size
    _check_positions(positions, n, m_bar.rows, m_bar.cols)
    cols = [m_bar.data[:, r : r + n, c : c + n].transpose(1, 2, 0).ravel() for r, c in positions]
    return np.stack(cols, axis=1)


def gather_all(m_bar: HsiCube, group_set: PatchGroupSet) -> np.ndarray:
    """Every group matrix at once, shape ``(T, n*n*K, p)``."""
    n = group_set.patch_size
    _check_positions(group_set.groups, n, m_bar.rows, m_bar.cols)
    P = patch_array(m_bar.data, n)
    g = group_set.groups
    return P[g[..., 0], g[..., 1]].transpose(0, 2, 1)


def aggregate_groups(denoised, group_set: PatchGroupSet, M: int, N: int, K: int, weights=None, value_scale=255.0) -> HsiCube:
    """Average overlapping patch estimates back into a ``M x N x K`` reduced image.

    ``denoised`` is a sequence (or ``(T, n*n*K, p)`` array) of group matrices.
    ``weights`` optionally gives one nonnegative weight per group; the default
    is plain count averaging. Accumulation runs in a fixed order, so the result
    does not depend on how the groups were produced.
    """
    n = group_set.patch_size
    g = group_set.groups
    T, p = g.shape[:2]
    stack = np.asarray(denoised, dtype=np.float64)
    if stack.shape != (T, n * n * K, p):
        raise DimensionError(f"expected denoised groups of shape {(T, n * n * K, p)}, got {stack.shape}")
    dr, dc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows = g[..., 0][:, :, None, None] + dr  # (T, p, n, n)
    cols = g[..., 1][:, :, None, None] + dc
    flat = (rows * N + cols).ravel()
    vals = stack.transpose(0, 2, 1).reshape(T, p, n, n, K)
    if weights is None:
        wts = np.ones(T)
    else:
        wts = np.asarray(weights, dtype=np.float64)
    wfull = np.broadcast_to(wts[:, None, None, None], (T, p, n, n)).ravel()
    count = np.bincount(flat, weights=wfull, minlength=M * N)
    if np.any(count <= 0):
        raise AssertionError("aggregation left pixels uncovered")
    out = np.empty((K, M * N))
    for k in range(K):
        out[k] = np.bincount(flat, weights=(vals[..., k].ravel() * wfull), minlength=M * N) / count
    return HsiCube(out.reshape(K, M, N), value_scale)
