"""Global spectral subspace: rank initialization, orthogonal basis updates and rank adaptation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import DimensionError, HsiCube, mode3_product, unfold_mode3
from .numerics import thin_svd, truncated_svd


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Column-orthonormal ``B x K`` matrix spanning the spectral subspace."""

    A: np.ndarray

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] < 1 or A.shape[1] > A.shape[0]:
            raise DimensionError(f"basis must be B x K with 1 <= K <= B, got {A.shape}")
        object.__setattr__(self, "A", A)

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def B(self) -> int:
        return self.A.shape[0]

    def orthonormality_error(self) -> float:
        return float(np.abs(self.A.T @ self.A - np.eye(self.K)).max())


@dataclass(frozen=True)
class RankSchedule:
    K0: int
    delta: int
    B: int

    def __post_init__(self):
        if self.K0 < 1 or self.delta < 0 or self.B < 1:
            raise ValueError(f"invalid rank schedule {self}")


def adapt_rank(schedule: RankSchedule, iteration: int) -> int:
    """Rank after ``iteration`` outer iterations: ``min(K0 + delta * iteration, B)``."""
    if iteration < 1:
        raise ValueError("iteration counts from 1")
    return min(schedule.K0 + schedule.delta * iteration, schedule.B)


def fix_signs(A: np.ndarray) -> np.ndarray:
    """Flip columns so that the largest-magnitude entry of each is nonnegative."""
    A = np.array(A, dtype=np.float64)
    idx = np.argmax(np.abs(A), axis=0)
    signs = np.sign(A[idx, np.arange(A.shape[1])])
    signs[signs == 0] = 1.0
    return A * signs


def estimate_noise(Y: np.ndarray) -> np.ndarray:
    """Per-pixel noise by regressing every band on all the others.

    ``Y`` is the ``B x P`` band-by-pixel matrix. Returns the ``B x P`` residual
    matrix. The residual of band ``i`` regressed on the remaining bands equals
    ``(R^-1 Y)_i / (R^-1)_ii`` with ``R = Y Y^T``, which avoids ``B``
    separate least-squares solves.
    """
    B = Y.shape[0]
    RR = Y @ Y.T
    small = 1e-10 * max(np.trace(RR) / B, 1e-300)
    P = np.linalg.inv(RR + small * np.eye(B))
    return (P @ Y) / np.diag(P)[:, None]


def estimate_rank_hysime(cube: HsiCube) -> tuple[int, np.ndarray]:
    """Signal subspace dimension and per-band noise std (HySime).

    Returns
    -------
    K0 : int
        Estimated subspace dimension, clamped to ``[1, B]``.
    sigma_bands : ndarray
        Noise standard deviation of every band.
    """
    B = cube.bands
    if B < 3:
        raise ValueError("rank estimation needs at least 3 bands")
    Y = unfold_mode3(cube)
    if np.ptp(Y) == 0.0:
        return 1, np.zeros(B)
    npix = Y.shape[1]
    W = estimate_noise(Y)
    sigma_bands = np.sqrt(np.mean(W**2, axis=1))
    X = Y - W
    Ry = Y @ Y.T / npix
    Rx = X @ X.T / npix
    Rn = np.diag(sigma_bands**2)
    Rn = Rn + np.trace(Rx) / B / 1e10 * np.eye(B)
    E, _, _ = np.linalg.svd(Rx)
    Py = np.einsum("ij,ik,kj->j", E, Ry, E)
    Pn = np.einsum("ij,ik,kj->j", E, Rn, E)
    cost = -Py + 2.0 * Pn
    K0 = int(np.sum(cost < 0))
    return min(max(K0, 1), B), sigma_bands


def project(z: HsiCube, basis: SpectralBasis) -> HsiCube:
    """Reduced image ``z x3 A^T``."""
    return mode3_product(z, basis.A, transpose=True)


def lift(m: HsiCube, basis: SpectralBasis) -> HsiCube:
    """Full-band image ``m x3 A``."""
    return mode3_product(m, basis.A)


def extract_basis_svd(z: HsiCube, K: int) -> tuple[SpectralBasis, HsiCube]:
    """Best rank-``K`` orthonormal spectral basis of ``z`` and its reduced image.

    ``A`` holds the leading ``K`` left singular vectors of the mode-3
    unfolding, which minimizes ``||z - m x3 A||_F`` jointly over ``m`` and
    column-orthonormal ``A``.
    """
    if not 1 <= K <= z.bands:
        raise ValueError(f"rank K={K} out of range for {z.bands} bands")
    Z3 = unfold_mode3(z)
    U, _, _ = truncated_svd(Z3, min(K, min(Z3.shape)))
    if U.shape[1] < K:
        U = _complete_basis(U, K)
    basis = SpectralBasis(fix_signs(U))
    return basis, project(z, basis)


def polar_factor(C: np.ndarray) -> np.ndarray:
    """Column-orthonormal ``A`` maximizing ``<A, C>``; ``A = U V^T`` from ``C = U S V^T``."""
    U, _, Vt = thin_svd(C)
    return U @ Vt


def extract_basis_procrustes(z: HsiCube, m_prev: HsiCube, delta: int = 0) -> SpectralBasis:
    """Orthonormal basis ``A`` minimizing ``||z - m x3 A||_F`` for a fixed reduced image.

    With ``delta > 0`` the reduced image is first augmented with ``delta``
    extra coefficient images taken from the leading right singular vectors of
    the residual ``z - m_prev x3 A0`` (``A0`` being the ``delta = 0``
    solution). The new rows are orthogonalized against the row space of
    ``m_prev`` and scaled by their residual singular values before the polar
    step, so the basis grows to ``K_prev + delta`` columns.
    """
    if m_prev.rows != z.rows or m_prev.cols != z.cols:
        raise DimensionError("reduced image and latent image differ in spatial size")
    K_prev = m_prev.bands
    if K_prev + delta > z.bands:
        raise DimensionError(f"K_prev + delta = {K_prev + delta} exceeds {z.bands} bands")
    Z3 = unfold_mode3(z)
    M3 = unfold_mode3(m_prev)
    if delta > 0:
        A0 = polar_factor(Z3 @ M3.T)
        R3 = Z3 - A0 @ M3
        _, s_res, Vt_res = thin_svd(R3)
        N3 = Vt_res[:delta]
        # orthogonalize the new coefficient rows against span(rows of M3)
        Q, _ = np.linalg.qr(M3.T)
        N3 = N3 - (N3 @ Q) @ Q.T
        norms = np.linalg.norm(N3, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        N3 = N3 / norms * s_res[:delta, None]
        M3 = np.vstack((M3, N3))
    return SpectralBasis(polar_factor(Z3 @ M3.T))


def _complete_basis(U: np.ndarray, K: int) -> np.ndarray:
    # only reached when M*N < K: pad with orthonormal complement directions
    B = U.shape[0]
    Q, _ = np.linalg.qr(np.hstack((U, np.eye(B))))
    Q[:, : U.shape[1]] = U
    return Q[:, :K]


def principal_angles(A1: np.ndarray, A2: np.ndarray) -> np.ndarray:
    """Principal angles (radians) between the column spaces of two orthonormal matrices."""
    s = np.linalg.svd(A1.T @ A2, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def subspace_residual(z: HsiCube, basis: SpectralBasis) -> float:
    """``||z - lift(project(z))||_F``."""
    Z3 = unfold_mode3(z)
    return float(np.linalg.norm(Z3 - basis.A @ (basis.A.T @ Z3)))


__all__ = [
    "SpectralBasis",
    "RankSchedule",
    "adapt_rank",
    "estimate_noise",
    "estimate_rank_hysime",
    "extract_basis_svd",
    "extract_basis_procrustes",
    "project",
    "lift",
    "polar_factor",
    "principal_angles",
    "subspace_residual",
]
