"""Hyperspectral cube container and mode-3 algebra.

Cubes are stored band-sequential: ``data`` has shape ``(B, M, N)`` and is
C-contiguous, so the mode-3 unfolding is a zero-copy ``reshape(B, M*N)``.
Matrices are plain 2-D float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


@dataclass(frozen=True, eq=False)
class HsiCube:
    """An ``M x N x B`` hyperspectral image.

    Parameters
    ----------
    data : ndarray
        Samples in band-sequential layout, shape ``(B, M, N)``.
    value_scale : float
        Nominal dynamic range (peak value used by PSNR/SSIM).
    """

    data: np.ndarray
    value_scale: float = 255.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"cube data must be a non-empty (B, M, N) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_mnb(cls, arr, value_scale: float = 255.0) -> "HsiCube":
        """Build a cube from an array laid out as ``(M, N, B)``."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionError(f"expected an (M, N, B) array, got shape {arr.shape}")
        return cls(np.moveaxis(arr, 2, 0), value_scale)

    def to_mnb(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, 2).copy()

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(M, N, B)``."""
        return self.rows, self.cols, self.bands

    def with_data(self, data) -> "HsiCube":
        return HsiCube(data, self.value_scale)

    def __repr__(self):
        m, n, b = self.shape
        return f"HsiCube({m}x{n}x{b}, value_scale={self.value_scale:g})"


def unfold_mode3(cube: HsiCube) -> np.ndarray:
    """Mode-3 unfolding: a ``B x MN`` matrix whose row ``b`` is band ``b`` in row-major order."""
    return cube.data.reshape(cube.bands, -1)


def fold_mode3(mat, rows: int, cols: int, value_scale: float = 255.0) -> HsiCube:
    """Inverse of :func:`unfold_mode3`."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != rows * cols:
        raise DimensionError(f"cannot fold matrix of shape {mat.shape} into {rows}x{cols} bands")
    return HsiCube(mat.reshape(mat.shape[0], rows, cols), value_scale)


def mode3_product(cube: HsiCube, A, transpose: bool = False) -> HsiCube:
    """Multiply ``cube`` along its spectral mode by ``A`` (or ``A.T``).

    Computes ``fold3(A @ X3)``; with ``transpose=True`` computes ``fold3(A.T @ X3)``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("mode-3 factor must be a matrix")
    op = A.T if transpose else A
    if op.shape[1] != cube.bands:
        raise DimensionError(f"factor of shape {op.shape} does not act on {cube.bands} bands")
    out = op @ unfold_mode3(cube)
    return fold_mode3(out, cube.rows, cube.cols, cube.value_scale)


def frobenius_norm(cube: HsiCube) -> float:
    return float(np.linalg.norm(cube.data.ravel()))
