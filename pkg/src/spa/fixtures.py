"""Deterministic synthetic bundles: planted feature clusters, a coarse seed
map covering a fraction of the object, and matching ground truth.

Object pixels share one unit feature direction, background pixels another
at a configurable angle; at zero noise and a 90-degree separation the
correlation structure is exactly block-diagonal, which gives the analytic
cases their exact expected outputs. The coarse map is a blurred indicator
of a compact in-object region grown to ``coverage`` of the object area.
All randomness flows from a PCG64 generator seeded from the spec, so
bundles are byte-stable across platforms.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UsageError
from .evaluation import BBox
from .selfcorr import FeatureGrid
from .tensor import BinaryMask, DenseTensor, Map2D, minmax_normalize, write_map, write_mask, write_tensor

N_CLASSES = 10


@dataclass(frozen=True)
class FixtureSpec:
    height: int = 14
    width: int = 14
    channels: int = 8
    shape: str = "rect"  # rect | blob
    coverage: float = 0.25
    separation_deg: float = 90.0
    noise: float = 0.05
    seed: int = 0
    image_scale: int = 4

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise UsageError("fixture grid must be at least 8x8")
        if self.channels < 2:
            raise UsageError("fixture needs at least 2 channels")
        if self.shape not in ("rect", "blob"):
            raise UsageError(f"shape must be 'rect' or 'blob', got {self.shape!r}")
        if not 0.0 < self.coverage < 1.0:
            raise UsageError(f"coverage must lie in (0, 1), got {self.coverage}")
        if self.noise < 0.0:
            raise UsageError(f"noise must be >= 0, got {self.noise}")
        if not 0.0 < self.separation_deg <= 180.0:
            raise UsageError("separation angle must lie in (0, 180] degrees")
        if self.image_scale < 1:
            raise UsageError("image_scale must be >= 1")


@dataclass(frozen=True)
class Fixture:
    spec: FixtureSpec
    features: FeatureGrid
    cam: Map2D
    object_mask: BinaryMask        # feature-grid resolution
    image_mask: BinaryMask         # image resolution
    gt_box: BBox                   # image resolution
    gt_class: int
    pred_top5: tuple[int, ...]


def _object_mask(spec: FixtureSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    oh = int(rng.integers(4, max(5, int(h * 0.6)) + 1))
    ow = int(rng.integers(4, max(5, int(w * 0.6)) + 1))
    y0 = int(rng.integers(0, h - oh + 1))
    x0 = int(rng.integers(0, w - ow + 1))
    mask = np.zeros((h, w), dtype=bool)
    if spec.shape == "rect":
        mask[y0:y0 + oh, x0:x0 + ow] = True
    else:
        cy, cx = y0 + (oh - 1) / 2.0, x0 + (ow - 1) / 2.0
        yy, xx = np.mgrid[0:h, 0:w]
        mask = ((yy - cy) / (oh / 2.0)) ** 2 + ((xx - cx) / (ow / 2.0)) ** 2 <= 1.0
        if mask.sum() < 4:  # tiny ellipse degenerates; fall back to the rect
            mask = np.zeros((h, w), dtype=bool)
            mask[y0:y0 + oh, x0:x0 + ow] = True
    return mask


def _grow_region(obj: np.ndarray, target: int) -> np.ndarray:
    """Compact FIFO flood growth from the object pixel nearest the centroid."""
    ys, xs = np.nonzero(obj)
    cy, cx = ys.mean(), xs.mean()
    start = int(np.argmin((ys - cy) ** 2 + (xs - cx) ** 2))
    seed = (int(ys[start]), int(xs[start]))
    region = np.zeros_like(obj)
    region[seed] = True
    queue = deque([seed])
    count = 1
    h, w = obj.shape
    while queue and count < target:
        y, x = queue.popleft()
        for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and obj[ny, nx] and not region[ny, nx]:
                region[ny, nx] = True
                count += 1
                queue.append((ny, nx))
                if count >= target:
                    break
    return region


def _box_blur3(img: np.ndarray) -> np.ndarray:
    padded = np.zeros((img.shape[0] + 2, img.shape[1] + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = img
    out = np.zeros_like(img, dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return out / 9.0


def generate_fixture(spec: FixtureSpec) -> Fixture:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    obj = _object_mask(spec, rng)

    theta = np.deg2rad(spec.separation_deg)
    u = np.zeros(spec.channels)
    u[0] = 1.0
    v = np.zeros(spec.channels)
    v[0] = np.cos(theta)
    v[1] = np.sin(theta)
    feats = np.where(obj[:, :, None], u, v)
    if spec.noise > 0.0:
        feats = feats + spec.noise * rng.standard_normal(feats.shape)

    n_obj = int(obj.sum())
    region = _grow_region(obj, max(4, round(spec.coverage * n_obj)))
    cam = minmax_normalize(Map2D(_box_blur3(region.astype(np.float64))))

    scale = spec.image_scale
    image_mask = np.kron(obj, np.ones((scale, scale), dtype=np.uint8))
    ys, xs = np.nonzero(image_mask)
    gt_box = BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))

    gt_class = int(rng.integers(0, N_CLASSES))
    others = [c for c in range(N_CLASSES) if c != gt_class]
    rng.shuffle(others)
    if rng.random() < 0.8:
        pred_top5 = (gt_class, *others[:4])
    elif rng.random() < 0.5:
        pred_top5 = (others[0], gt_class, *others[1:4])  # top-5 hit, top-1 miss
    else:
        pred_top5 = tuple(others[:5])

    return Fixture(
        spec=spec,
        features=FeatureGrid(feats.astype(np.float32)),
        cam=cam,
        object_mask=BinaryMask(obj.astype(np.uint8)),
        image_mask=BinaryMask(image_mask),
        gt_box=gt_box,
        gt_class=gt_class,
        pred_top5=pred_top5,
    )


def write_fixture(fix: Fixture, out_dir, image_id: str) -> dict:
    """Write the bundle files and return the matching annotation record."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feat_name = f"{image_id}_features.spt"
    cam_name = f"{image_id}_cam.spt"
    mask_name = f"{image_id}_gtmask.spt"
    write_tensor(DenseTensor(fix.features.features), out_dir / feat_name)
    write_map(fix.cam, out_dir / cam_name)
    write_mask(fix.image_mask, out_dir / mask_name)
    scale = fix.spec.image_scale
    return {
        "image_id": image_id,
        "width": fix.spec.width * scale,
        "height": fix.spec.height * scale,
        "gt_class": fix.gt_class,
        "pred_top5": list(fix.pred_top5),
        "gt_boxes": [fix.gt_box.as_list()],
        "gt_mask": mask_name,
        "map": cam_name,
    }


def write_fixture_suite(spec: FixtureSpec, count: int, out_dir) -> list[dict]:
    """Write ``count`` bundles seeded spec.seed .. spec.seed+count-1 plus
    a combined annotations.json; returns the records."""
    if count < 1:
        raise UsageError("count must be >= 1")
    out_dir = Path(out_dir)
    records = []
    for i in range(count):
        sub = FixtureSpec(**{**spec.__dict__, "seed": spec.seed + i})
        records.append(write_fixture(generate_fixture(sub), out_dir, f"img{i:04d}"))
    (out_dir / "annotations.json").write_text(
        json.dumps(records, sort_keys=True, indent=2) + "\n"
    )
    return records
