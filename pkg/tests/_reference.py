"""Independent loop-based oracles used only by the tests.

These deliberately avoid the library's vectorized paths: flood-fill
component labeling, a straight-line refinement pipeline, and a
recounted threshold sweep.
"""
from collections import deque
from math import sqrt

import numpy as np


def floodfill_largest_component_box(binary: np.ndarray):
    """Largest 8-connected component via BFS flood fill; returns
    (x0, y0, x1, y1) half-open, or None for an empty mask. Ties resolve to
    the component whose first pixel comes first in scan order."""
    h, w = binary.shape
    seen = np.zeros_like(binary, dtype=bool)
    best_size = 0
    best_box = None
    for sy in range(h):
        for sx in range(w):
            if not binary[sy, sx] or seen[sy, sx]:
                continue
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            size = 0
            y0 = y1 = sy
            x0 = x1 = sx
            while queue:
                y, x = queue.popleft()
                size += 1
                y0, y1 = min(y0, y), max(y1, y)
                x0, x1 = min(x0, x), max(x1, x)
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and binary[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            if size > best_size:
                best_size = size
                best_box = (x0, y0, x1 + 1, y1 + 1)
    return best_box


def peak_iou_recount(quantized: np.ndarray, gt_bits: np.ndarray):
    """Exhaustive per-threshold recount of mask IoU; returns (best, arg)."""
    best = -1.0
    best_t = 0
    gt = gt_bits.astype(bool)
    for t in range(256):
        pred = quantized > t
        inter = int(np.logical_and(pred, gt).sum())
        union = int(np.logical_or(pred, gt).sum())
        score = inter / union if union else 0.0
        if score > best:
            best = score
            best_t = t
    return best, best_t


def scg_reference(features: np.ndarray, cam: np.ndarray, delta_h: float, delta_l: float,
                  orders=(1, 2)) -> np.ndarray:
    """Straight-line scalar reimplementation of the refinement pipeline.

    Everything is plain Python loops over lists: cosine matrix, chain
    order-2 with endpoint exclusion, per-row min-max, elementwise max,
    seed gathering, averaging, subtraction, clipping.
    """
    h, w, c = features.shape
    n = h * w
    rows = [[float(v) for v in features[i // w, i % w]] for i in range(n)]
    norms = [sqrt(sum(x * x for x in r)) for r in rows]
    s = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for a, b in zip(rows[i], rows[j]):
                acc += a * b
            s[i][j] = max(-1.0, min(1.0, acc / (norms[i] * norms[j])))

    mats = []
    for order in sorted(set(orders)):
        if order == 1:
            mats.append([[max(0.0, s[i][j]) for j in range(n)] for i in range(n)])
            continue
        assert order == 2, "reference pipeline covers orders 1 and 2"
        raw = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    if k == i or k == j:
                        continue
                    acc += s[i][k] * s[k][j]
                raw[i][j] = acc / n
        normed = []
        for row in raw:
            lo, hi = min(row), max(row)
            if hi == lo:
                normed.append([0.0] * n)
            else:
                normed.append([(v - lo) / (hi - lo) for v in row])
        mats.append(normed)
    fused = [[max(m[i][j] for m in mats) for j in range(n)] for i in range(n)]

    lo, hi = cam.min(), cam.max()
    cam_n = np.zeros_like(cam, dtype=np.float64) if hi == lo else (cam - lo) / (hi - lo)
    flat_cam = cam_n.reshape(-1)
    obj_idx = [i for i in range(n) if flat_cam[i] > delta_h]
    bg_idx = [i for i in range(n) if flat_cam[i] < delta_l]
    assert obj_idx, "reference pipeline expects a non-empty object seed"

    obj_map = [sum(fused[i][j] for i in obj_idx) / len(obj_idx) for j in range(n)]
    if bg_idx:
        bg_map = [sum(fused[i][j] for i in bg_idx) / len(bg_idx) for j in range(n)]
    else:
        bg_map = [0.0] * n
    out = [max(0.0, o - b) for o, b in zip(obj_map, bg_map)]
    return np.array(out, dtype=np.float64).reshape(h, w)
