"""Alternating minimization driver: latent update, spectral basis, non-local denoising, adaptation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .cube import DimensionError, HsiCube
from .degradation import (
    DegradationOp,
    IdentityOp,
    MaskOp,
    latent_update_cs,
    latent_update_denoise,
    latent_update_inpaint,
)
from .denoiser import NoiseState, WnnmDenoiser, WnnmParams, reestimate_noise
from .grouping import PatchGeometry, aggregate_groups, gather_all, match_groups
from .quality import psnr
from .subspace import (
    RankSchedule,
    SpectralBasis,
    adapt_rank,
    estimate_rank_hysime,
    extract_basis_procrustes,
    extract_basis_svd,
    lift,
    project,
)

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = {"denoise": 5, "inpaint": 30, "reconstruct": 50}
DEFAULT_INIT_STEPS = {"inpaint": 20, "reconstruct": 50}


class NgmeetError(RuntimeError):
    """A stage failed; ``log`` holds the iterations completed before the failure."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class NgmeetConfig:
    """Hyper-parameters of a restoration run.

    ``lam`` is serialized as ``"lambda"``. Fields left at ``None`` take
    task- or noise-dependent defaults (``max_iter``, ``group_size``,
    ``init_steps``).

    ``weight_scaling`` sets the shrinkage constant handed to the group
    denoiser: ``"rank"`` uses ``lam * K`` (one ``lam`` per spectral channel of
    the ``n*n*K``-row group matrices, whose noise singular values grow with
    the row count), ``"none"`` uses ``lam`` as is.

    ``reestimate=False`` keeps the noise level at ``sigma0`` for every
    iteration; together with ``rematch=False`` and ``delta=0`` the loop
    becomes a fixed-operator iteration.
    """

    mu: float = 2.0
    lam: float = 9.0
    gamma: float = 0.5
    delta: int = 2
    max_iter: Optional[int] = None
    rank_init: str = "hysime"
    fixed_rank: Optional[int] = None
    patch_size: int = 6
    stride: int = 4
    search_radius: int = 20
    group_size: Optional[int] = None
    basis_update: str = "svd"
    rematch: bool = True
    reestimate: bool = True
    aggregation: str = "uniform"
    weight_scaling: str = "rank"
    cg_tol: float = 1e-6
    cg_max: int = 100
    precondition: bool = False
    stop_rel_change: float = 1e-3
    sigma_floor: float = 1e-4
    cs_sigma_frac: float = 0.01
    init_steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.mu <= 0 or self.lam <= 0 or self.gamma <= 0:
            raise ValueError("mu, lambda and gamma must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.rank_init not in ("hysime", "fixed"):
            raise ValueError(f"unknown rank_init {self.rank_init!r}")
        if self.rank_init == "fixed" and (self.fixed_rank is None or self.fixed_rank < 1):
            raise ValueError("rank_init='fixed' needs a positive fixed_rank")
        if self.basis_update not in ("svd", "procrustes"):
            raise ValueError(f"unknown basis_update {self.basis_update!r}")
        if self.aggregation not in ("uniform", "rank"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.weight_scaling not in ("rank", "none"):
            raise ValueError(f"unknown weight_scaling {self.weight_scaling!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NgmeetConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        rank_init = d.get("rank_init")
        if isinstance(rank_init, str) and rank_init.startswith("fixed(") and rank_init.endswith(")"):
            d["rank_init"] = "fixed"
            d["fixed_rank"] = int(rank_init[6:-1])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def iterations_for(self, kind: str) -> int:
        return self.max_iter if self.max_iter is not None else DEFAULT_ITERATIONS[kind]

    def weight_const(self, K: int) -> float:
        return self.lam * K if self.weight_scaling == "rank" else self.lam

    def geometry(self, sigma: float) -> PatchGeometry:
        kw = dict(patch_size=self.patch_size, stride=self.stride, search_radius=self.search_radius)
        if self.group_size is not None:
            return PatchGeometry(group_size=self.group_size, **kw)
        return PatchGeometry.for_noise_level(sigma, **kw)


@dataclass
class RestorationTask:
    """What to restore: ``kind`` is ``denoise``, ``inpaint`` or ``reconstruct``.

    ``observation`` is an :class:`HsiCube` for denoising and inpainting and a
    raw measurement array for reconstruction.
    """

    kind: str
    observation: object
    op: DegradationOp
    sigma0: Optional[float] = None
    value_scale: float = 255.0

    def __post_init__(self):
        if self.kind not in DEFAULT_ITERATIONS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        obs = self.observation
        if isinstance(obs, HsiCube):
            if obs.data.shape != self.op.cube_shape:
                raise DimensionError(f"observation {obs.shape} does not match operator domain {self.op.shape}")
            self.value_scale = obs.value_scale
        elif np.shape(obs) != tuple(self.op.measurement_shape):
            raise DimensionError(f"measurement shape {np.shape(obs)} does not match operator {self.op.measurement_shape}")

    @classmethod
    def denoise(cls, y: HsiCube, sigma: Optional[float] = None) -> "RestorationTask":
        return cls("denoise", y, IdentityOp(y.shape), sigma)

    @classmethod
    def inpaint(cls, y: HsiCube, op: MaskOp, sigma: Optional[float] = None) -> "RestorationTask":
        return cls("inpaint", y, op, sigma)

    @classmethod
    def reconstruct(cls, measurement, op: DegradationOp, sigma: Optional[float] = None, value_scale: float = 255.0) -> "RestorationTask":
        return cls("reconstruct", np.asarray(measurement, dtype=np.float64), op, sigma, value_scale)

    @property
    def measurement(self) -> np.ndarray:
        obs = self.observation
        return obs.data if isinstance(obs, HsiCube) else obs

    def describe(self) -> dict:
        return {"kind": self.kind, "operator": self.op.describe(), "sigma0": self.sigma0}


@dataclass
class IterationRecord:
    iteration: int
    rank: int
    sigma: float
    fidelity: float
    coupling: float
    rel_change: Optional[float]
    time_latent: float
    time_stage_a: float
    time_stage_b: float
    cg_iterations: Optional[int] = None
    cg_rel_residual: Optional[float] = None
    psnr: Optional[float] = None


@dataclass
class IterationLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    @property
    def stage_a_total(self) -> float:
        return float(sum(self.column("time_stage_a")))

    @property
    def stage_b_total(self) -> float:
        return float(sum(self.column("time_stage_b")))

    def to_list(self) -> list:
        return [asdict(r) for r in self.records]


@dataclass
class RunResult:
    x_hat: HsiCube
    log: IterationLog
    x0: HsiCube
    sigma0: float
    K0: int
    basis: SpectralBasis
    total_time: float


def operator_norm_sq(op: DegradationOp, iters: int = 20, seed: int = 0) -> float:
    """Power-iteration estimate of ``||h||^2``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cube_shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.normal(v)
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return lam


def landweber(op: DegradationOp, y, steps: int, value_scale: float = 255.0) -> HsiCube:
    """Landweber iterations ``z <- z + tau h*(y - h(z))`` from zero with ``tau = 1 / ||h||^2`` (at most 1)."""
    L = operator_norm_sq(op)
    tau = 1.0 if L <= 1.0 + 1e-9 else 1.0 / L
    z = np.zeros(op.cube_shape)
    for _ in range(steps):
        z = z + tau * op.adjoint(y - op.apply(z))
    return HsiCube(z, value_scale)


def initialize(task: RestorationTask, config: NgmeetConfig) -> tuple[HsiCube, float, int]:
    """Initial estimate, initial noise std and initial rank for ``task``."""
    vs = task.value_scale
    sigma_bands = None
    if task.kind == "denoise":
        x0 = HsiCube(np.zeros(task.op.cube_shape), vs)
        rank_src = task.observation
    else:
        steps = config.init_steps if config.init_steps is not None else DEFAULT_INIT_STEPS[task.kind]
        x0 = landweber(task.op, task.measurement, max(1, steps), vs)
        rank_src = x0
    if config.rank_init == "fixed":
        K0 = min(config.fixed_rank, rank_src.bands)
    else:
        K0, sigma_bands = estimate_rank_hysime(rank_src)
    if task.sigma0 is not None:
        sigma0 = float(task.sigma0)
    elif task.kind == "denoise":
        if sigma_bands is None:
            _, sigma_bands = estimate_rank_hysime(task.observation)
        sigma0 = float(np.sqrt(np.mean(sigma_bands**2)))
    else:
        sigma0 = config.cs_sigma_frac * vs
    return x0, sigma0, int(K0)


def objective_value(y, z: HsiCube, m: HsiCube, basis: SpectralBasis, op: DegradationOp, mu: float) -> tuple[float, float]:
    """Quadratic terms of the split objective: ``(0.5||y - h(z)||^2, 0.5 mu ||z - m x3 A||^2)``."""
    y = y.data if isinstance(y, HsiCube) else np.asarray(y, dtype=np.float64)
    fid = 0.5 * float(np.sum((y - op.apply(z)) ** 2))
    coup = 0.5 * mu * float(np.sum((z.data - lift(m, basis).data) ** 2))
    return fid, coup


def svd_truncation_baseline(y: HsiCube, K: int) -> HsiCube:
    """Plain spectral rank-``K`` truncation of ``y``."""
    basis, m = extract_basis_svd(y, K)
    return lift(m, basis)


def _rank_weights(groups: np.ndarray) -> np.ndarray:
    # groups that keep fewer singular values are trusted more
    s = np.linalg.svd(groups, compute_uv=False)
    tol = s[:, :1] * 1e-8
    r = np.maximum((s > tol).sum(axis=1), 1)
    return 1.0 - (r - 1) / groups.shape[2]


def ngmeet_run(
    task: RestorationTask,
    config: NgmeetConfig = NgmeetConfig(),
    ground_truth: Optional[HsiCube] = None,
    denoiser=None,
    callback: Optional[Callable[[int, HsiCube], None]] = None,
) -> RunResult:
    """Restore ``task`` by alternating latent update, spectral basis and non-local denoising.

    Iteration ``i`` runs the latent image update for the task, re-fits the
    orthonormal spectral basis at the current rank, denoises the reduced image
    with (optionally re-matched) patch groups, lifts the result, then
    re-estimates the noise level and grows the rank. Stops after
    ``max_iter`` iterations or once the relative change of the estimate drops
    below ``stop_rel_change``.
    """
    t_start = time.perf_counter()
    x0, sigma0, K0 = initialize(task, config)
    vs = task.value_scale
    M, N, B = task.op.shape
    K0 = min(K0, B)
    geom = config.geometry(sigma0)
    schedule = RankSchedule(K0, config.delta, B)
    noise = NoiseState(sigma0=sigma0, sigma=sigma0, gamma=config.gamma)
    floor = config.sigma_floor * vs
    x_ref = task.observation if task.kind == "denoise" else x0
    y = task.measurement
    n_iter = config.iterations_for(task.kind)

    itlog = IterationLog()
    x_prev = x0
    m_prev = None
    groups = None
    K = K0
    basis = None
    for i in range(1, n_iter + 1):
        try:
            t0 = time.perf_counter()
            cg_it = cg_res = None
            if task.kind == "denoise":
                z = task.observation if i == 1 else latent_update_denoise(task.observation, x_prev, config.mu)
            elif task.kind == "inpaint":
                z = latent_update_inpaint(task.observation, x_prev, task.op)
            else:
                z, cg = latent_update_cs(y, x_prev, task.op, config.mu, config.cg_tol, config.cg_max, config.precondition)
                cg_it, cg_res = cg.iterations, cg.relative_residual
                if not cg.converged:
                    log.warning("CG stopped at iteration %d with relative residual %.3g", cg.iterations, cg_res)
            if i > 1 and config.reestimate:
                noise.sigma = max(reestimate_noise(z, x_ref, noise), floor)
            t1 = time.perf_counter()

            if config.basis_update == "svd" or m_prev is None:
                basis, m_bar = extract_basis_svd(z, K)
            else:
                basis = extract_basis_procrustes(z, m_prev, K - m_prev.bands)
                m_bar = project(z, basis)
            t2 = time.perf_counter()

            if groups is None or config.rematch:
                groups = match_groups(m_bar, geom)
            den = denoiser if denoiser is not None else WnnmDenoiser(WnnmParams(weight_const=config.weight_const(K)))
            stack = den(gather_all(m_bar, groups), noise.sigma)
            weights = _rank_weights(stack) if config.aggregation == "rank" else None
            m = aggregate_groups(stack, groups, M, N, K, weights=weights, value_scale=vs)
            x = lift(m, basis)
            t3 = time.perf_counter()
        except Exception as exc:
            raise NgmeetError(f"iteration {i} failed: {exc}", itlog) from exc

        fid, coup = objective_value(y, z, m, basis, task.op, config.mu)
        denom = np.linalg.norm(x_prev.data)
        rel = float(np.linalg.norm(x.data - x_prev.data) / denom) if denom > 0 else None
        itlog.records.append(
            IterationRecord(
                iteration=i,
                rank=K,
                sigma=noise.sigma,
                fidelity=fid,
                coupling=coup,
                rel_change=rel,
                time_latent=t1 - t0,
                time_stage_a=t2 - t1,
                time_stage_b=t3 - t2,
                cg_iterations=cg_it,
                cg_rel_residual=cg_res,
                psnr=psnr(x, ground_truth, ground_truth.value_scale) if ground_truth is not None else None,
            )
        )
        log.debug("iter %d: K=%d sigma=%.4g rel=%s", i, K, noise.sigma, rel)
        if callback is not None:
            callback(i, x)

        K = adapt_rank(schedule, i)
        m_prev, x_prev = m, x
        if rel is not None and rel < config.stop_rel_change:
            break

    return RunResult(x_prev, itlog, x0, sigma0, K0, basis, time.perf_counter() - t_start)
