"""Pairwise similarity matrices over feature grids and their chain-order extensions.

The first-order matrix holds ReLU-clipped cosine similarity between every
pair of grid cells. Order h >= 2 chains h single-step similarities through
h-1 intermediate cells and averages over all chains, excluding chains that
start at the source cell or end at the target cell; the chain average is
built from the raw (unclipped) cosine matrix. Higher orders are row
min-max normalized, and the fused matrix takes the elementwise maximum of
order 1 and every normalized higher order.

The chained sums are GEMM-shaped: the whole exclusion-corrected order-h
matrix comes out of matrix powers of the cosine matrix plus rank-1 endpoint
corrections, so the heavy lifting is delegated to BLAS. Loop-based
reference implementations live alongside for oracle tests and benchmarks.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import sqrt

import numpy as np

from .errors import DataError, InvalidShapeError, UsageError
from .tensor import DenseTensor, _as_finite_f32, _bilinear


@dataclass(frozen=True)
class FeatureGrid:
    """H x W grid of C-dimensional feature vectors (float32 storage)."""

    features: np.ndarray

    def __post_init__(self):
        arr = _as_finite_f32(self.features, "feature grid")
        if arr.ndim != 3:
            raise InvalidShapeError(f"feature grid must be (H, W, C), got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1 or c < 1 or h * w < 2:
            raise InvalidShapeError(f"feature grid needs H*W >= 2 and C >= 1, got {arr.shape}")
        object.__setattr__(self, "features", arr)

    @property
    def height(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def channels(self) -> int:
        return self.features.shape[2]

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def flat(self) -> np.ndarray:
        """(H*W, C) row-major view."""
        return self.features.reshape(self.n, self.channels)

    @classmethod
    def from_tensor(cls, t: DenseTensor) -> "FeatureGrid":
        if len(t.dims) != 3:
            raise InvalidShapeError(f"expected (H, W, C) tensor, got dims {t.dims}")
        return cls(t.array)


@dataclass(frozen=True)
class CorrelationMatrix:
    """n x n pairwise-affinity matrix (float64; serialized as float32)."""

    entries: np.ndarray
    order: int = 1
    normalized: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.entries, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidShapeError(f"correlation matrix must be square, got shape {arr.shape}")
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_tensor(self) -> DenseTensor:
        return DenseTensor(self.entries.astype(np.float32))


def _raw_cosine(flat32: np.ndarray) -> np.ndarray:
    feats = flat32.astype(np.float64)
    norms = np.sqrt(np.einsum("ic,ic->i", feats, feats))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"zero-norm feature vector at pixel {int(zero[0])}")
    unit = feats / norms[:, None]
    s = unit @ unit.T
    s = np.triu(s) + np.triu(s, 1).T  # mirror for exact symmetry
    np.clip(s, -1.0, 1.0, out=s)
    np.fill_diagonal(s, 1.0)
    return s


def cosine_similarity_matrix(grid: FeatureGrid) -> CorrelationMatrix:
    """Raw cosine similarity between every pair of grid cells."""
    return CorrelationMatrix(_raw_cosine(grid.flat), order=1, normalized=False)


def first_order_sc(grid: FeatureGrid) -> CorrelationMatrix:
    """Cosine similarity with negative values clipped to zero."""
    return CorrelationMatrix(np.maximum(_raw_cosine(grid.flat), 0.0), order=1, normalized=False)


def _chain_similarity(s: np.ndarray, h: int) -> np.ndarray:
    """Raw order-h chain similarity from a cosine matrix.

    Sums products of h similarities over all chains of h-1 intermediates,
    drops chains whose first cell equals the source or whose last cell
    equals the target, and divides by n^(h-1). The exclusions are applied
    by inclusion-exclusion on matrix powers; when source and target
    coincide the two endpoint constraints name the same chain, which is
    why the h == 2 branch adds the doubly-subtracted term back on the
    diagonal.
    """
    n = s.shape[0]
    d = np.diagonal(s).copy()
    if h == 2:
        raw = s @ s - d[:, None] * s - s * d[None, :]
        idx = np.arange(n)
        raw[idx, idx] += d * d
    else:
        p_lo = np.linalg.matrix_power(s, h - 2)
        p_mid = p_lo @ s
        p_hi = p_mid @ s
        raw = p_hi - d[:, None] * p_mid - p_mid * d[None, :] + d[:, None] * p_lo * d[None, :]
    raw /= float(n) ** (h - 1)
    return raw


def high_order_similarity(grid: FeatureGrid, h: int) -> CorrelationMatrix:
    """Raw (unnormalized) order-h chain similarity matrix, h >= 2."""
    if h < 2:
        raise UsageError(f"chain order must be >= 2, got {h}")
    return CorrelationMatrix(_chain_similarity(_raw_cosine(grid.flat), h), order=h, normalized=False)


def _row_minmax(m: np.ndarray) -> np.ndarray:
    lo = m.min(axis=1, keepdims=True)
    hi = m.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.zeros_like(m)
    nz = (span != 0.0).ravel()
    out[nz] = (m[nz] - lo[nz]) / span[nz]
    return out


def row_minmax_normalize(c: CorrelationMatrix) -> CorrelationMatrix:
    """Rescale each row to [0, 1]; constant rows become zero rows."""
    return CorrelationMatrix(_row_minmax(c.entries), order=c.order, normalized=True)


def _check_orders(orders) -> tuple[int, ...]:
    out = tuple(sorted(set(int(h) for h in orders)))
    if not out:
        raise UsageError("orders must not be empty")
    if any(h < 1 for h in out):
        raise UsageError(f"orders must be >= 1, got {out}")
    return out


def hsc(grid: FeatureGrid, orders=(1, 2)) -> CorrelationMatrix:
    """Elementwise max of order-1 and row-normalized higher-order matrices."""
    orders = _check_orders(orders)
    s = _raw_cosine(grid.flat)
    acc = None
    for h in orders:
        m = np.maximum(s, 0.0) if h == 1 else _row_minmax(_chain_similarity(s, h))
        acc = m if acc is None else np.maximum(acc, m)
    return CorrelationMatrix(acc, order=max(orders), normalized=True)


def fuse_layers(mats: list[CorrelationMatrix]) -> CorrelationMatrix:
    """Elementwise sum of same-size matrices, then per-row min-max rescale."""
    if not mats:
        raise UsageError("fuse_layers needs at least one matrix")
    n = mats[0].n
    for m in mats[1:]:
        if m.n != n:
            raise DataError(f"cannot fuse matrices of size {n} and {m.n}")
    total = np.zeros((n, n), dtype=np.float64)
    for m in mats:
        total += m.entries
    return CorrelationMatrix(_row_minmax(total), order=max(m.order for m in mats), normalized=True)


def resize_feature_grid(grid: FeatureGrid, out_h: int, out_w: int) -> FeatureGrid:
    """Channelwise bilinear resample onto a new spatial grid."""
    if out_h < 1 or out_w < 1:
        raise InvalidShapeError(f"target extents must be positive, got {out_h}x{out_w}")
    if out_h == grid.height and out_w == grid.width:
        return grid
    return FeatureGrid(_bilinear(grid.features.astype(np.float64), out_h, out_w))


# ---------------------------------------------------------------------------
# Loop-based reference implementations (oracles / benchmark baseline)
# ---------------------------------------------------------------------------

def cosine_similarity_bruteforce(grid: FeatureGrid) -> np.ndarray:
    """Per-pair scalar-loop cosine matrix; O(n^2 C) Python operations."""
    rows = [[float(v) for v in cell] for cell in grid.flat]
    n = len(rows)
    norms = []
    for i, r in enumerate(rows):
        acc = 0.0
        for x in r:
            acc += x * x
        if acc == 0.0:
            raise DataError(f"zero-norm feature vector at pixel {i}")
        norms.append(sqrt(acc))
    s = [[0.0] * n for _ in range(n)]
    for i in range(n):
        ri, ni = rows[i], norms[i]
        for j in range(i, n):
            acc = 0.0
            for a, b in zip(ri, rows[j]):
                acc += a * b
            v = acc / (ni * norms[j])
            v = max(-1.0, min(1.0, v))
            s[i][j] = v
            s[j][i] = v
    return np.array(s, dtype=np.float64)


def high_order_similarity_bruteforce(grid: FeatureGrid, h: int) -> np.ndarray:
    """Nested-loop raw order-h matrix; the O(n^h) baseline the fast path is checked against."""
    if h < 2:
        raise UsageError(f"chain order must be >= 2, got {h}")
    s = cosine_similarity_bruteforce(grid).tolist()
    n = len(s)
    out = np.empty((n, n), dtype=np.float64)
    if h == 2:
        for i in range(n):
            si = s[i]
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    if k == i or k == j:
                        continue
                    acc += si[k] * s[k][j]
                out[i, j] = acc
    else:
        for i in range(n):
            si = s[i]
            for j in range(n):
                acc = 0.0
                for chain in product(range(n), repeat=h - 1):
                    if chain[0] == i or chain[-1] == j:
                        continue
                    p = si[chain[0]]
                    for a, b in zip(chain, chain[1:]):
                        p *= s[a][b]
                    acc += p * s[chain[-1]][j]
                out[i, j] = acc
    out /= float(n) ** (h - 1)
    return out
