"""Dense numerical kernels: SVD, conjugate gradient and the fast Walsh-Hadamard transform."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class SvdConvergenceError(RuntimeError):
    """The SVD failed to converge with every available LAPACK driver."""


class CgBreakdown(RuntimeError):
    """Conjugate gradient produced a non-finite iterate."""


class SvdResult(NamedTuple):
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


def thin_svd(mat) -> SvdResult:
    """Economy SVD ``mat = U @ diag(s) @ Vt`` with ``s`` non-increasing.

    Uses the divide-and-conquer driver and falls back to the QR-iteration
    driver if that does not converge.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if not np.all(np.isfinite(mat)):
        raise ValueError("thin_svd: matrix has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        log.warning("gesdd did not converge on %s matrix, retrying with gesvd", mat.shape)
        try:
            U, s, Vt = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(f"SVD of {mat.shape} matrix did not converge (gesdd, gesvd): {exc}") from exc
    return SvdResult(U, s, Vt)


def truncated_svd(mat, k: int) -> SvdResult:
    """Rank-``k`` factors of :func:`thin_svd`."""
    mat = np.asarray(mat, dtype=np.float64)
    if not 1 <= k <= min(mat.shape):
        raise ValueError(f"rank k={k} out of range for a {mat.shape} matrix")
    U, s, Vt = thin_svd(mat)
    return SvdResult(U[:, :k], s[:k], Vt[:k])


@dataclass(frozen=True)
class LinearMap:
    """A linear operator given by its forward and adjoint actions on flat vectors."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_dim: int
    out_dim: int

    def __call__(self, x):
        return self.apply(x)


def adjoint_mismatch(op: LinearMap, x, y) -> float:
    """Relative gap between ``<op(x), y>`` and ``<x, op*(y)>``."""
    lhs = float(np.dot(np.ravel(op.apply(x)), np.ravel(y)))
    rhs = float(np.dot(np.ravel(x), np.ravel(op.adjoint(y))))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    rhs_norm: float

    @property
    def relative_residual(self) -> float:
        return self.residual_norm / self.rhs_norm if self.rhs_norm > 0 else self.residual_norm


def conjugate_gradient(
    op: Callable[[np.ndarray], np.ndarray],
    rhs,
    tol: float = 1e-6,
    max_iter: int = 100,
    x0=None,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> CgResult:
    """Solve ``op(x) = rhs`` for a symmetric positive definite ``op``.

    Stops once ``||op(x) - rhs|| <= tol * ||rhs||``. ``precond`` applies an
    approximate inverse (e.g. a diagonal scaling); ``None`` means plain CG.
    The returned residual is recomputed from the final iterate, not taken
    from the recursion.
    """
    b = np.asarray(rhs, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return CgResult(np.zeros_like(b), 0, True, 0.0, 0.0)
    r = b - op(x)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(np.vdot(r, z))
    it = 0
    rnorm = float(np.linalg.norm(r))
    while rnorm > tol * bnorm and it < max_iter:
        Ap = op(p)
        pAp = float(np.vdot(p, Ap))
        if not np.isfinite(pAp) or pAp <= 0.0:
            if not np.isfinite(pAp):
                raise CgBreakdown(f"non-finite curvature at iteration {it}")
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        it += 1
        if not np.all(np.isfinite(x)):
            raise CgBreakdown(f"non-finite iterate at iteration {it}")
        rnorm = float(np.linalg.norm(r))
        z = precond(r) if precond is not None else r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = float(np.linalg.norm(b - op(x)))
    return CgResult(x, it, true_res <= tol * bnorm, true_res, bnorm)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def fwht(v, inverse: bool = False) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform (natural ordering).

    The transform is symmetric and orthonormal, so it is its own inverse;
    ``inverse`` is accepted for readability at call sites.
    """
    x = np.array(v, dtype=np.float64).ravel()
    n = x.size
    if not is_power_of_two(n):
        raise ValueError(f"fwht length must be a power of two, got {n}")
    h = 1
    while h < n:
        x = x.reshape(-1, 2, h)
        a = x[:, 0, :]
        b = x[:, 1, :]
        x = np.stack((a + b, a - b), axis=1)
        h *= 2
    x = x.reshape(n)
    x *= 1.0 / np.sqrt(n)
    return x
