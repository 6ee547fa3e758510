"""File formats: the ``HSI1`` cube container, PGM band dumps, JSON run reports and CSV tables.

``HSI1`` layout (all integers unsigned 32-bit little-endian)::

    b"HSI1" | M | N | B | dtype tag | payload

The only dtype tag defined is ``1`` (32-bit little-endian float). The payload
holds ``M*N*B`` samples band-sequentially: band 0 row by row, then band 1, ...

Users with real datasets (``.mat``, ENVI, HDF5) convert them with
:func:`write_hsi` after loading an ``(M, N, B)`` array into
:meth:`HsiCube.from_mnb`; no reader for those formats ships here.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cube import HsiCube

MAGIC = b"HSI1"
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sIIII")


class HsiFormatError(ValueError):
    """Base class for malformed container files."""

    code = "format_error"


class BadMagicError(HsiFormatError):
    code = "bad_magic"


class TruncatedPayloadError(HsiFormatError):
    code = "truncated_payload"


class UnknownDtypeError(HsiFormatError):
    code = "unknown_dtype"


def write_hsi(path, cube: HsiCube) -> None:
    """Write ``cube`` as an ``HSI1`` file (samples quantized to float32)."""
    M, N, B = cube.shape
    payload = np.ascontiguousarray(cube.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, M, N, B, DTYPE_FLOAT32))
        fh.write(payload)


def read_hsi(path, value_scale: float = 255.0) -> HsiCube:
    """Read an ``HSI1`` file.

    Raises
    ------
    BadMagicError
        The file does not start with ``b"HSI1"``.
    UnknownDtypeError
        The dtype tag is not ``1``.
    TruncatedPayloadError
        The header or payload is shorter than announced.
    HsiFormatError
        Zero dimensions or trailing bytes after the payload.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic in {path}: expected {MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"truncated payload in {path}: header needs {_HEADER.size} bytes, file has {len(raw)}")
    _, M, N, B, tag = _HEADER.unpack_from(raw)
    if tag != DTYPE_FLOAT32:
        raise UnknownDtypeError(f"unknown dtype tag {tag} in {path}")
    if min(M, N, B) == 0:
        raise HsiFormatError(f"zero dimension in {path}: {M}x{N}x{B}")
    need = M * N * B * 4
    have = len(raw) - _HEADER.size
    if have < need:
        raise TruncatedPayloadError(f"truncated payload in {path}: expected {need} bytes, found {have}")
    if have > need:
        raise HsiFormatError(f"{have - need} trailing bytes after payload in {path}")
    data = np.frombuffer(raw, dtype="<f4", count=M * N * B, offset=_HEADER.size)
    return HsiCube(data.astype(np.float64).reshape(B, M, N), value_scale)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def band_to_uint8(band: np.ndarray, lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    """Linearly map ``[lo, hi]`` to ``0..255`` with clipping and rounding."""
    if hi <= lo:
        raise ValueError("display range must have hi > lo")
    scaled = (np.asarray(band, dtype=np.float64) - lo) * (255.0 / (hi - lo))
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path, band: np.ndarray, lo: float = 0.0, hi: float = 255.0) -> None:
    """Binary (``P5``) 8-bit portable graymap of a 2-D band."""
    img = band_to_uint8(band, lo, hi)
    if img.ndim != 2:
        raise ValueError("PGM export needs a 2-D band")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM written by :func:`write_pgm`."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise HsiFormatError(f"{path} is not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise HsiFormatError("only 8-bit PGM is supported")
    pixels = parts[4][: rows * cols]
    if len(pixels) < rows * cols:
        raise TruncatedPayloadError(f"truncated PGM payload in {path}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(rows, cols)


def _json_safe(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class RunReport:
    """Everything needed to understand and reproduce one CLI run.

    ``timing`` holds ``total``, ``stage_a`` and ``stage_b`` wall-clock seconds;
    they are the only fields that differ between repeated runs.
    """

    command: str
    config: dict
    task: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    metrics: Optional[dict] = None
    iterations: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _json_safe(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path) -> "RunReport":
        return cls(**json.loads(Path(path).read_text()))


def write_band_csv(path, metrics: dict) -> None:
    """Per-band PSNR/SSIM table from a :meth:`MetricReport.to_dict` mapping."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "psnr_db", "ssim"])
        for b, (p, s) in enumerate(zip(metrics["psnr_bands"], metrics["ssim_bands"])):
            writer.writerow([b, "inf" if p is None else f"{p:.6f}", f"{s:.6f}"])


def write_rows_csv(path, rows: list[dict]) -> None:
    """Write a list of flat dicts (shared keys) as CSV."""
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
