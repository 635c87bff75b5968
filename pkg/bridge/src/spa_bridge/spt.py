"""Writer for the SPT tensor format consumed by the spa toolkit.

Layout (little-endian): magic ``SPT1``, dtype byte 0 (float32), rank byte,
rank u32 extents, row-major float32 payload. No padding, no checksum.
"""
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPT1"
DTYPE_REAL32 = 0


def write_spt(array: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or any(d < 1 for d in arr.shape):
        raise ValueError(f"tensor must have rank >= 1 with positive extents, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    header = MAGIC + bytes([DTYPE_REAL32, arr.ndim])
    header += b"".join(struct.pack("<I", d) for d in arr.shape)
    Path(path).write_bytes(header + arr.tobytes())
