"""Patch-group denoising by weighted nuclear norm shrinkage, and noise re-estimation."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .cube import DimensionError, HsiCube
from .grouping import PatchGroupSet, gather_all


@dataclass(frozen=True)
class WnnmParams:
    """``weight_const`` scales the shrinkage weights ``c * sqrt(p) * sigma^2 / (s_hat + eps)``."""

    weight_const: float = 9.0
    eps: float = 1e-16

    def __post_init__(self):
        if self.weight_const <= 0:
            raise ValueError("weight_const must be positive")


@dataclass
class NoiseState:
    sigma0: float
    sigma: float
    gamma: float = 0.5


def _shrink(s: np.ndarray, p: int, sigma: float, params: WnnmParams) -> np.ndarray:
    s_hat = np.sqrt(np.maximum(s**2 - p * sigma**2, 0.0))
    w = params.weight_const * np.sqrt(p) * sigma**2 / (s_hat + params.eps)
    return np.maximum(s - w, 0.0)


def wnnm_prox(g, sigma: float, params: WnnmParams = WnnmParams()) -> np.ndarray:
    """Weighted singular value shrinkage of one ``m x p`` group matrix.

    Weights grow as the estimated clean singular values shrink, so soft
    thresholding each singular value by its own weight is the exact proximal
    step of the weighted nuclear norm.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise DimensionError("group must be a matrix")
    if not np.any(g):
        return np.zeros_like(g)
    U, s, Vt = np.linalg.svd(g, full_matrices=False)
    return (U * _shrink(s, g.shape[1], sigma, params)) @ Vt


def wnnm_prox_batch(stack, sigma: float, params: WnnmParams = WnnmParams()) -> np.ndarray:
    """:func:`wnnm_prox` applied to every matrix of a ``(T, m, p)`` stack.

    Tall groups (``m > p``, the usual case) go through the eigendecomposition
    of the ``p x p`` Gram matrices: with ``g = U S V^T`` the result is
    ``g V diag(shrunk / s) V^T``, which needs neither ``U`` nor an ``m x p``
    SVD. Directions whose singular value is numerically zero are dropped;
    they carry no energy.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.shape[0] == 0:
        return stack.copy()
    T, m, p = stack.shape
    if m <= p:
        U, s, Vt = np.linalg.svd(stack, full_matrices=False)
        shrunk = _shrink(s, p, sigma, params)
        return np.matmul(U * shrunk[:, None, :], Vt)
    gram = np.matmul(stack.transpose(0, 2, 1), stack)
    evals, V = np.linalg.eigh(gram)
    evals, V = evals[:, ::-1], V[:, :, ::-1]
    s = np.sqrt(np.maximum(evals, 0.0))
    shrunk = _shrink(s, p, sigma, params)
    tiny = s[:, :1] * (p * np.finfo(float).eps)
    keep = s > tiny
    factor = np.divide(shrunk, s, out=np.zeros_like(s), where=keep)
    return np.matmul(stack, np.matmul(V * factor[:, None, :], V.transpose(0, 2, 1)))


class GroupDenoiser(Protocol):
    def __call__(self, groups: np.ndarray, sigma: float) -> np.ndarray:
        """Denoise a ``(T, m, p)`` stack of group matrices at noise std ``sigma``."""


def worker_count() -> int:
    """Worker cap from ``NGMEET_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("NGMEET_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class WnnmDenoiser:
    """The shipped :class:`GroupDenoiser`; splits the stack across threads when allowed."""

    params: WnnmParams = WnnmParams()
    chunk: int = 64

    def __call__(self, groups: np.ndarray, sigma: float) -> np.ndarray:
        T = groups.shape[0]
        workers = worker_count()
        if workers == 1 or T <= self.chunk:
            return wnnm_prox_batch(groups, sigma, self.params)
        out = np.empty_like(groups, dtype=np.float64)
        starts = range(0, T, self.chunk)

        def run(a):
            out[a : a + self.chunk] = wnnm_prox_batch(groups[a : a + self.chunk], sigma, self.params)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
        return out


def denoise_groups(group_set: PatchGroupSet, m_bar: HsiCube, sigma: float, denoiser: GroupDenoiser | None = None) -> np.ndarray:
    """Gather every group of ``m_bar`` and denoise it; returns a ``(T, n*n*K, p)`` stack."""
    if denoiser is None:
        denoiser = WnnmDenoiser()
    return denoiser(gather_all(m_bar, group_set), sigma)


def reestimate_noise(x_i: HsiCube, x_ref: HsiCube, state: NoiseState) -> float:
    """Remaining noise std ``gamma * sqrt(|sigma0^2 - ||x_i - x_ref||^2 / (M N B)|)``."""
    if x_i.shape != x_ref.shape:
        raise DimensionError(f"shape mismatch {x_i.shape} vs {x_ref.shape}")
    mse = float(np.mean((x_i.data - x_ref.data) ** 2))
    return state.gamma * float(np.sqrt(abs(state.sigma0**2 - mse)))
