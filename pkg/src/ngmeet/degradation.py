"""Linear degradation operators and the latent-image updates they induce.

Every operator maps a ``(B, M, N)`` array to a measurement array and has an
exact adjoint. Measurements are plain numpy arrays whose shape is given by
``measurement_shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import DimensionError, HsiCube
from .numerics import CgResult, LinearMap, conjugate_gradient, fwht


def _as_array(x) -> np.ndarray:
    if isinstance(x, HsiCube):
        return x.data
    return np.asarray(x, dtype=np.float64)


class DegradationOp:
    """Base class; ``shape`` is ``(M, N, B)`` of the image domain."""

    kind = "base"
    shape: tuple

    @property
    def cube_shape(self) -> tuple:
        M, N, B = self.shape
        return (B, M, N)

    @property
    def measurement_shape(self) -> tuple:
        return self.cube_shape

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y) -> np.ndarray:
        raise NotImplementedError

    def gram_diagonal(self):
        """Diagonal of ``h* h`` (array or scalar), used by the diagonal preconditioner."""
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.apply(x))

    def as_linear_map(self) -> LinearMap:
        cs, ms = self.cube_shape, self.measurement_shape
        return LinearMap(
            apply=lambda v: self.apply(np.reshape(v, cs)).ravel(),
            adjoint=lambda v: self.adjoint(np.reshape(v, ms)).ravel(),
            in_dim=int(np.prod(cs)),
            out_dim=int(np.prod(ms)),
        )

    def _check(self, x: np.ndarray):
        if x.shape != self.cube_shape:
            raise DimensionError(f"{self.kind} operator expects a cube of shape {self.cube_shape}, got {x.shape}")

    def describe(self) -> dict:
        M, N, B = self.shape
        return {"kind": self.kind, "rows": M, "cols": N, "bands": B}


@dataclass
class IdentityOp(DegradationOp):
    shape: tuple
    kind = "identity"

    def apply(self, x):
        x = _as_array(x)
        self._check(x)
        return x.copy()

    def adjoint(self, y):
        y = _as_array(y)
        self._check(y)
        return y.copy()

    def gram_diagonal(self):
        return 1.0


@dataclass
class MaskOp(DegradationOp):
    """Sampling operator keeping the voxels where ``mask`` (``(B, M, N)`` bool) is set."""

    mask: np.ndarray
    kind = "mask"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 3:
            raise DimensionError("mask must be a (B, M, N) array")
        B, M, N = self.mask.shape
        self.shape = (M, N, B)

    def apply(self, x):
        x = _as_array(x)
        self._check(x)
        return np.where(self.mask, x, 0.0)

    def adjoint(self, y):
        y = _as_array(y)
        self._check(y)
        return np.where(self.mask, y, 0.0)

    def gram_diagonal(self):
        return self.mask.astype(np.float64)

    @property
    def sampling_ratio(self) -> float:
        return float(self.mask.mean())


def _pow2_blocks(length: int) -> list[int]:
    """Power-of-two block sizes summing to ``length``, largest first."""
    return [1 << k for k in range(length.bit_length() - 1, -1, -1) if length >> k & 1]


@dataclass
class HadamardCSOp(DegradationOp):
    """Random permuted Walsh-Hadamard compressive sampling ``S P2 H P1 vec(x)``.

    ``H`` is block diagonal with orthonormal Walsh-Hadamard blocks whose
    power-of-two sizes sum to ``M*N*B``, so it is an exact orthogonal matrix at
    any length and the operator rows are orthonormal (``h h* = I``).

    The row selection always keeps the DC (all-ones) coefficient of every
    block and draws the remaining rows at random. A constant cube excites only
    those coefficients, so dropping them would put the cube mean in the null
    space of the operator.
    """

    shape: tuple
    sampling_ratio: float
    seed: int = 0
    kind = "hadamard"
    perm1: np.ndarray = field(init=False, repr=False)
    perm2: np.ndarray = field(init=False, repr=False)
    n_meas: int = field(init=False)

    def __post_init__(self):
        if not 0 < self.sampling_ratio <= 1:
            raise ValueError(f"sampling ratio must be in (0, 1], got {self.sampling_ratio}")
        M, N, B = self.shape
        L = M * N * B
        rng = np.random.default_rng(self.seed)
        self._blocks = _pow2_blocks(L)
        self.perm1 = rng.permutation(L)
        dc = np.cumsum([0] + self._blocks[:-1])
        rest = np.setdiff1d(np.arange(L), dc)
        self.perm2 = np.concatenate((dc, rng.permutation(rest)))
        self.n_meas = max(len(dc), int(np.floor(self.sampling_ratio * L)))

    @property
    def measurement_shape(self) -> tuple:
        return (self.n_meas,)

    def _transform(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        start = 0
        for size in self._blocks:
            out[start : start + size] = fwht(v[start : start + size])
            start += size
        return out

    def apply(self, x):
        x = _as_array(x)
        self._check(x)
        v = x.ravel()[self.perm1]
        v = self._transform(v)
        return v[self.perm2][: self.n_meas]

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size != self.n_meas:
            raise DimensionError(f"expected {self.n_meas} measurements, got {y.size}")
        L = self.perm1.size
        u = np.zeros(L)
        u[self.perm2[: self.n_meas]] = y
        u = self._transform(u)
        out = np.empty(L)
        out[self.perm1] = u
        return out.reshape(self.cube_shape)

    def gram_diagonal(self):
        return self.n_meas / self.perm1.size

    def describe(self) -> dict:
        d = super().describe()
        d.update(sampling_ratio=self.sampling_ratio, seed=self.seed)
        return d


@dataclass
class CassiOp(DegradationOp):
    """Single-disperser coded-aperture snapshot imager.

    Band ``b`` is modulated by the ``M x N`` coded aperture and sheared by
    ``b`` columns, then all bands are summed on an ``M x (N + B - 1)``
    detector, so ``y[i, j] = sum_b mask[i, j - b] * x[b, i, j - b]``.
    """

    mask: np.ndarray
    bands: int
    seed: int | None = None
    kind = "cassi"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.mask.ndim != 2:
            raise DimensionError("CASSI mask must be M x N")
        M, N = self.mask.shape
        self.shape = (M, N, self.bands)

    @property
    def measurement_shape(self) -> tuple:
        M, N, B = self.shape
        return (M, N + B - 1)

    def apply(self, x):
        x = _as_array(x)
        self._check(x)
        M, N, B = self.shape
        y = np.zeros((M, N + B - 1))
        coded = x * self.mask
        for b in range(B):
            y[:, b : b + N] += coded[b]
        return y

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.measurement_shape:
            raise DimensionError(f"expected measurement of shape {self.measurement_shape}, got {y.shape}")
        M, N, B = self.shape
        x = np.empty((B, M, N))
        for b in range(B):
            x[b] = y[:, b : b + N] * self.mask
        return x

    def gram_diagonal(self):
        # each voxel lands on exactly one detector pixel
        return np.broadcast_to(self.mask**2, self.cube_shape)

    def describe(self) -> dict:
        d = super().describe()
        d.update(seed=self.seed, mask_density=getattr(self, "density", float(self.mask.mean())))
        return d


def make_mask(M: int, N: int, B: int, sampling_ratio: float, seed: int = 0) -> MaskOp:
    """Uniformly random voxel mask with exactly ``floor(SR * M*N*B)`` observed entries."""
    if not 0 < sampling_ratio <= 1:
        raise ValueError(f"sampling ratio must be in (0, 1], got {sampling_ratio}")
    L = M * N * B
    k = int(np.floor(sampling_ratio * L))
    rng = np.random.default_rng(seed)
    flat = np.zeros(L, dtype=bool)
    flat[rng.choice(L, size=k, replace=False)] = True
    return MaskOp(flat.reshape(B, M, N))


def make_hadamard_cs(M: int, N: int, B: int, sampling_ratio: float, seed: int = 0) -> HadamardCSOp:
    return HadamardCSOp((M, N, B), sampling_ratio, seed)


def make_cassi(M: int, N: int, B: int, mask_density: float = 0.5, seed: int = 0) -> CassiOp:
    """CASSI operator with a random binary coded aperture of the given density."""
    if not 0 < mask_density <= 1:
        raise ValueError("mask density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((M, N)) < mask_density
    op = CassiOp(mask, B, seed)
    op.density = mask_density  # the requested density, so describe() can rebuild the same mask
    return op


def latent_update_denoise(y: HsiCube, lifted: HsiCube, mu: float) -> HsiCube:
    """Closed-form latent image ``(y + mu * lifted) / (1 + mu)``."""
    if y.shape != lifted.shape:
        raise DimensionError(f"shape mismatch {y.shape} vs {lifted.shape}")
    return y.with_data((y.data + mu * lifted.data) / (1.0 + mu))


def latent_update_inpaint(y: HsiCube, lifted: HsiCube, op: MaskOp) -> HsiCube:
    """Observed voxels from ``y``, the rest from ``lifted``."""
    if y.shape != lifted.shape or op.cube_shape != y.data.shape:
        raise DimensionError("observation, estimate and mask disagree in shape")
    return y.with_data(np.where(op.mask, y.data, lifted.data))


def latent_update_cs(
    y,
    lifted: HsiCube,
    op: DegradationOp,
    mu: float,
    cg_tol: float = 1e-6,
    cg_max: int = 100,
    precondition: bool = False,
    x0=None,
) -> tuple[HsiCube, CgResult]:
    """Solve ``(h* h + mu I) z = h* y + mu * lifted`` by conjugate gradient."""
    if mu <= 0:
        raise ValueError("mu must be positive for the normal equations to be SPD")
    if lifted.data.shape != op.cube_shape:
        raise DimensionError("estimate does not match operator domain")
    rhs = op.adjoint(y) + mu * lifted.data
    precond = None
    if precondition:
        inv_diag = 1.0 / (np.asarray(op.gram_diagonal()) + mu)
        precond = lambda r: r * inv_diag  # noqa: E731
    res = conjugate_gradient(
        lambda z: op.normal(z) + mu * z,
        rhs,
        tol=cg_tol,
        max_iter=cg_max,
        x0=lifted.data if x0 is None else x0,
        precond=precond,
    )
    return lifted.with_data(res.x), res


def operator_from_dict(desc: dict) -> DegradationOp:
    """Rebuild a seeded operator from its :meth:`DegradationOp.describe` output.

    Only operators fully determined by shape and seed can be rebuilt
    (identity, Hadamard, CASSI); masks travel as files.
    """
    kind = desc.get("kind")
    try:
        M, N, B = int(desc["rows"]), int(desc["cols"]), int(desc["bands"])
    except KeyError as exc:
        raise ValueError(f"operator description lacks {exc.args[0]!r}") from None
    if kind == "identity":
        return IdentityOp((M, N, B))
    if kind == "hadamard":
        return make_hadamard_cs(M, N, B, float(desc["sampling_ratio"]), int(desc.get("seed", 0)))
    if kind == "cassi":
        return make_cassi(M, N, B, float(desc.get("mask_density", 0.5)), int(desc.get("seed", 0)))
    raise ValueError(f"cannot rebuild operator of kind {kind!r}")
