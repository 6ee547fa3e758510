"""Hyperspectral image restoration by alternating a global spectral subspace with non-local low-rank denoising."""

from .cube import DimensionError, HsiCube, fold_mode3, frobenius_norm, mode3_product, unfold_mode3
from .degradation import CassiOp, HadamardCSOp, IdentityOp, MaskOp, make_cassi, make_hadamard_cs, make_mask
from .denoiser import WnnmDenoiser, WnnmParams, wnnm_prox
from .io import read_hsi, write_hsi
from .pipeline import NgmeetConfig, NgmeetError, RestorationTask, ngmeet_run, svd_truncation_baseline
from .quality import evaluate, psnr, sam, ssim
from .synthetic import add_gaussian_noise, synth_lowrank_hsi

__version__ = "0.1.0"

__all__ = [
    "CassiOp",
    "DimensionError",
    "HadamardCSOp",
    "HsiCube",
    "IdentityOp",
    "MaskOp",
    "NgmeetConfig",
    "NgmeetError",
    "RestorationTask",
    "WnnmDenoiser",
    "WnnmParams",
    "add_gaussian_noise",
    "evaluate",
    "fold_mode3",
    "frobenius_norm",
    "make_cassi",
    "make_hadamard_cs",
    "make_mask",
    "mode3_product",
    "ngmeet_run",
    "psnr",
    "read_hsi",
    "sam",
    "ssim",
    "svd_truncation_baseline",
    "synth_lowrank_hsi",
    "unfold_mode3",
    "wnnm_prox",
    "write_hsi",
]
