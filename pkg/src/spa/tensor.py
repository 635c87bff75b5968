"""Dense float32 tensors, the SPT file format, and 2-d map utilities.

Storage is 32-bit float everywhere; reductions accumulate in 64-bit.
The SPT format is little-endian: magic ``SPT1`` (4 bytes), a dtype byte
(0 = float32), a rank byte, rank u32 extents, then the raw row-major
float32 payload. No padding, no checksum.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    InvalidShapeError,
    NonFiniteError,
    TrailingDataError,
    TruncatedFileError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    UsageError,
)

SPT_MAGIC = b"SPT1"
SPT_DTYPE_REAL32 = 0


def _as_finite_f32(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim < 1:
        raise InvalidShapeError(f"{what} must have at least one dimension")
    arr = np.ascontiguousarray(arr)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True)
class DenseTensor:
    """Row-major n-dimensional float32 array with finite entries."""

    array: np.ndarray

    def __post_init__(self):
        arr = _as_finite_f32(self.array, "tensor")
        if arr.ndim < 1:
            raise InvalidShapeError("tensor must have at least one dimension")
        if any(d < 1 for d in arr.shape):
            raise InvalidShapeError(f"tensor extents must be positive, got {arr.shape}")
        object.__setattr__(self, "array", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the payload."""
        return self.array.reshape(-1)


@dataclass(frozen=True)
class Map2D:
    """Single-channel spatial map (float32)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_finite_f32(self.values, "map")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidShapeError(f"map must be 2-d with positive extents, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def value_range(self) -> tuple[float, float]:
        return float(self.values.min()), float(self.values.max())


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel 0/1 mask with the same extents contract as Map2D."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.bits))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidShapeError(f"mask must be 2-d with positive extents, got shape {arr.shape}")
        arr = arr.astype(np.uint8, copy=False)
        if not np.isin(arr, (0, 1)).all():
            raise InvalidShapeError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum(dtype=np.int64))

    def flat_indices(self) -> np.ndarray:
        """Row-major indices of the set pixels."""
        return np.flatnonzero(self.bits)


# ---------------------------------------------------------------------------
# SPT file format
# ---------------------------------------------------------------------------

def write_tensor(t: DenseTensor, path) -> None:
    """Serialize a tensor; byte-deterministic for identical input."""
    dims = t.dims
    header = SPT_MAGIC + bytes([SPT_DTYPE_REAL32, len(dims)])
    header += b"".join(struct.pack("<I", d) for d in dims)
    payload = np.ascontiguousarray(t.array, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> DenseTensor:
    """Parse an SPT file, reproducing exactly what write_tensor stored."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the 4-byte magic")
    magic = blob[:4]
    if magic != SPT_MAGIC:
        if magic[:3] == SPT_MAGIC[:3]:
            raise UnsupportedVersionError(f"{path}: unsupported format version {magic!r}")
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if len(blob) < 6:
        raise TruncatedFileError(f"{path}: header ends before dtype/rank bytes")
    dtype_code = blob[4]
    if dtype_code != SPT_DTYPE_REAL32:
        raise UnsupportedDtypeError(f"{path}: unsupported dtype code {dtype_code}")
    ndim = blob[5]
    if ndim == 0:
        raise InvalidShapeError(f"{path}: rank must be at least 1")
    header_len = 6 + 4 * ndim
    if len(blob) < header_len:
        raise TruncatedFileError(f"{path}: header declares {ndim} extents but file is too short")
    dims = struct.unpack_from(f"<{ndim}I", blob, 6)
    if any(d == 0 for d in dims):
        raise InvalidShapeError(f"{path}: zero extent in dims {dims}")
    n_values = 1
    for d in dims:
        n_values *= d
    expected = header_len + 4 * n_values
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: payload holds {(len(blob) - header_len) // 4} of {n_values} values"
        )
    if len(blob) > expected:
        raise TrailingDataError(f"{path}: {len(blob) - expected} bytes after the payload")
    flat = np.frombuffer(blob, dtype="<f4", count=n_values, offset=header_len)
    if not np.all(np.isfinite(flat)):
        raise NonFiniteError(f"{path}: payload contains non-finite values")
    return DenseTensor(flat.reshape(dims).copy())


def read_map(path) -> Map2D:
    """Read an SPT file that must hold a 2-d map."""
    t = read_tensor(path)
    if len(t.dims) != 2:
        raise InvalidShapeError(f"{path}: expected a 2-d map, got dims {t.dims}")
    return Map2D(t.array)


def write_map(m: Map2D, path) -> None:
    write_tensor(DenseTensor(m.values), path)


def read_mask(path, threshold: float = 0.5) -> BinaryMask:
    """Read a 2-d SPT file and binarize it at ``threshold``."""
    m = read_map(path)
    return BinaryMask((m.values > threshold).astype(np.uint8))


def write_mask(mask: BinaryMask, path) -> None:
    write_tensor(DenseTensor(mask.bits.astype(np.float32)), path)


# ---------------------------------------------------------------------------
# Map operations
# ---------------------------------------------------------------------------

def minmax_normalize(m: Map2D) -> Map2D:
    """Rescale to [0, 1]; a constant map normalizes to all zeros."""
    vals = m.values.astype(np.float64)
    lo = vals.min()
    hi = vals.max()
    if hi == lo:
        return Map2D(np.zeros_like(m.values))
    return Map2D((vals - lo) / (hi - lo))


def _bilinear(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners-false bilinear resample of a (H, W) or (H, W, C) array."""
    h, w = src.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0
    if src.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    a = src[np.ix_(y0, x0)]
    b = src[np.ix_(y0, x1)]
    c = src[np.ix_(y1, x0)]
    d = src[np.ix_(y1, x1)]
    out = (a * (1.0 - wy) * (1.0 - wx) + b * (1.0 - wy) * wx
           + c * wy * (1.0 - wx) + d * wy * wx)
    # interpolation is a convex combination; clip away float rounding spill
    return np.clip(out, src.min(), src.max())


def resize_bilinear(m: Map2D, out_h: int, out_w: int) -> Map2D:
    """Resample to (out_h, out_w); constant maps stay constant."""
    if out_h < 1 or out_w < 1:
        raise InvalidShapeError(f"target extents must be positive, got {out_h}x{out_w}")
    return Map2D(_bilinear(m.values.astype(np.float64), out_h, out_w))


def quantize_u8(m: Map2D) -> np.ndarray:
    """Map [0, 1] values onto 0..255, rounding half up."""
    vals = m.values.astype(np.float64)
    if vals.min() < 0.0 or vals.max() > 1.0:
        raise UsageError(
            f"quantize_u8 expects values in [0, 1], got range {m.value_range()}"
        )
    return np.floor(vals * 255.0 + 0.5).astype(np.uint8)
