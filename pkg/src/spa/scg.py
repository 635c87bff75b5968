"""Refine a coarse activation map using the self-correlation structure of features.

Single pass: threshold the normalized coarse map into confident object and
background seeds, pull the correlation row of every seed pixel, average the
object rows and the background rows separately, subtract, and clip at zero.
An empty background seed degrades to subtracting nothing; an empty object
seed falls back to the normalized input map (flagged so callers can record
it).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, EmptySeedError, UsageError
from .selfcorr import CorrelationMatrix, FeatureGrid, fuse_layers, hsc, resize_feature_grid
from .tensor import BinaryMask, Map2D, minmax_normalize


@dataclass(frozen=True)
class ScgConfig:
    delta_h: float = 0.7
    delta_l: float = 0.1
    orders: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if not 0.0 < self.delta_h < 1.0:
            raise UsageError(f"delta_h must lie in (0, 1), got {self.delta_h}")
        if not 0.0 < self.delta_l < 1.0:
            raise UsageError(f"delta_l must lie in (0, 1), got {self.delta_l}")
        if self.delta_l >= self.delta_h:
            raise UsageError(
                f"delta_l must be below delta_h, got delta_l={self.delta_l} delta_h={self.delta_h}"
            )
        object.__setattr__(self, "orders", tuple(self.orders))


@dataclass(frozen=True)
class RowSet:
    """Correlation rows of the selected pixels, each reshaped to the grid."""

    rows: np.ndarray  # (N, H, W) float64

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise DataError(f"row set must be (N>=1, H, W), got shape {arr.shape}")
        object.__setattr__(self, "rows", arr)

    @property
    def count(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class ScgResult:
    map: Map2D
    fallback_to_cam: bool
    object_seed_count: int
    background_seed_count: int


def seed_mask(cam: Map2D, threshold: float, below: bool = False) -> BinaryMask:
    """Strict threshold mask: values > threshold (or < threshold when ``below``)."""
    if below:
        bits = cam.values < threshold
    else:
        bits = cam.values > threshold
    return BinaryMask(bits.astype(np.uint8))


def gather_rows(mat: CorrelationMatrix, mask: BinaryMask) -> RowSet:
    """Correlation row of every selected pixel, reshaped to H x W."""
    h, w = mask.height, mask.width
    if h * w != mat.n:
        raise DataError(f"mask extents {h}x{w} do not match matrix size {mat.n}")
    idx = mask.flat_indices()
    if idx.size == 0:
        raise EmptySeedError("seed mask selects no pixels")
    return RowSet(mat.entries[idx].reshape(idx.size, h, w))


def aggregate_rows(rows: RowSet) -> Map2D:
    """Elementwise mean over the selected rows (64-bit accumulation)."""
    return Map2D(rows.rows.mean(axis=0, dtype=np.float64))


def scg_map(
    grids: FeatureGrid | Sequence[FeatureGrid],
    cam: Map2D,
    cfg: ScgConfig | None = None,
) -> ScgResult:
    """Full refinement pass over one or more feature layers.

    Feature grids are resampled to the coarse map's resolution before the
    correlation matrices are built; multiple layers are fused by summation
    and per-row rescaling.
    """
    cfg = cfg or ScgConfig()
    if isinstance(grids, FeatureGrid):
        grids = [grids]
    if not grids:
        raise UsageError("scg_map needs at least one feature grid")
    cam_n = minmax_normalize(cam)
    mats = [
        hsc(resize_feature_grid(g, cam.height, cam.width), cfg.orders) for g in grids
    ]
    mat = mats[0] if len(mats) == 1 else fuse_layers(mats)

    obj_seed = seed_mask(cam_n, cfg.delta_h)
    bg_seed = seed_mask(cam_n, cfg.delta_l, below=True)
    if obj_seed.count == 0:
        return ScgResult(cam_n, True, 0, bg_seed.count)

    obj_map = aggregate_rows(gather_rows(mat, obj_seed)).values.astype(np.float64)
    if bg_seed.count > 0:
        bg_map = aggregate_rows(gather_rows(mat, bg_seed)).values.astype(np.float64)
    else:
        bg_map = np.zeros_like(obj_map)
    out = np.maximum(obj_map - bg_map, 0.0)
    return ScgResult(Map2D(out), False, obj_seed.count, bg_seed.count)
