"""Localization evaluation: box extraction, overlap ratios, location-error
metrics, threshold-sweep mask scores, and the five-way error taxonomy.

A prediction counts as localized when its box reaches IoU >= 0.5 with at
least one ground-truth box. Top-1 additionally needs the top predicted
class to match, Top-5 needs the true class anywhere in the five
predictions. Failed images partition into: wrong class (Cls), box spanning
several instances (M-Ins), box covering only part of the object (Part),
box much larger than the object (More), or anything else (OT).
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError, InvalidShapeError, SpaError, UsageError
from .tensor import (
    BinaryMask,
    Map2D,
    minmax_normalize,
    quantize_u8,
    read_map,
    read_mask,
    resize_bilinear,
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in half-open pixel coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvalidShapeError(
                f"box must have positive area, got ({self.x0}, {self.y0}, {self.x1}, {self.y1})"
            )

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    gt_class: int
    pred_top5: tuple[int, ...]
    gt_boxes: tuple[BBox, ...]
    map_path: str
    gt_mask_path: str | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"{self.image_id}: image extents must be positive")
        if len(self.pred_top5) != 5:
            raise DataError(f"{self.image_id}: pred_top5 must hold 5 class ids")
        if not self.gt_boxes:
            raise DataError(f"{self.image_id}: at least one ground-truth box required")
        for b in self.gt_boxes:
            if b.x0 < 0 or b.y0 < 0 or b.x1 > self.width or b.y1 > self.height:
                raise DataError(f"{self.image_id}: box {b.as_list()} outside image bounds")

    @property
    def pred_top1(self) -> int:
        return self.pred_top5[0]


class ErrorCase(str, Enum):
    CORRECT = "Correct"
    CLS = "Cls"
    M_INS = "M-Ins"
    PART = "Part"
    MORE = "More"
    OT = "OT"


@dataclass(frozen=True)
class LocOutcome:
    top1_ok: bool
    top5_ok: bool
    gtknown_ok: bool


@dataclass(frozen=True)
class ExtractedBox:
    box: BBox
    full_image_fallback: bool


@dataclass(frozen=True)
class EvalReport:
    top1_loc_err: float
    top5_loc_err: float
    gtknown_loc_err: float
    mean_peak_iou: float | None
    mean_peak_t: float | None
    error_breakdown: dict[str, int]
    n_images: int
    mode: str
    theta: float

    def to_json_dict(self) -> dict:
        return {
            "top1_loc_err": self.top1_loc_err,
            "top5_loc_err": self.top5_loc_err,
            "gtknown_loc_err": self.gtknown_loc_err,
            "mean_peak_iou": self.mean_peak_iou,
            "mean_peak_t": self.mean_peak_t,
            "error_breakdown": self.error_breakdown,
            "n_images": self.n_images,
            "mode": self.mode,
            "theta": self.theta,
        }


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _intersection(a: BBox, b: BBox) -> float:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = _intersection(a, b)
    return inter / (a.area + b.area - inter)


def iog(pred: BBox, gt: BBox) -> float:
    """Intersection over the ground-truth box area."""
    return _intersection(pred, gt) / gt.area


def iop(pred: BBox, gt: BBox) -> float:
    """Intersection over the predicted box area."""
    return _intersection(pred, gt) / pred.area


# ---------------------------------------------------------------------------
# Box extraction
# ---------------------------------------------------------------------------

_CONN8 = np.ones((3, 3), dtype=np.uint8)


def extract_bbox(loc_map: Map2D, theta: float, img_w: int, img_h: int) -> ExtractedBox:
    """Tight box around the largest 8-connected blob above ``theta``.

    The map is resampled to image resolution and min-max normalized before
    thresholding. A map with no pixel above threshold yields the full-image
    box, flagged.
    """
    normed = minmax_normalize(resize_bilinear(loc_map, img_h, img_w))
    binary = normed.values > theta
    if not binary.any():
        return ExtractedBox(BBox(0.0, 0.0, float(img_w), float(img_h)), True)
    labels, n_labels = ndimage.label(binary, structure=_CONN8)
    sizes = np.bincount(labels.ravel(), minlength=n_labels + 1)
    sizes[0] = 0
    best = int(np.argmax(sizes))  # ties resolve to the first label in scan order
    ys, xs = np.nonzero(labels == best)
    return ExtractedBox(
        BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)),
        False,
    )


# ---------------------------------------------------------------------------
# Per-image metrics
# ---------------------------------------------------------------------------

def loc_outcome(record: ImageRecord, pred: BBox) -> LocOutcome:
    """Localization hit/miss at the IoU >= 0.5 rule (inclusive)."""
    best = max(iou(pred, g) for g in record.gt_boxes)
    gtknown = best >= 0.5
    return LocOutcome(
        top1_ok=gtknown and record.pred_top1 == record.gt_class,
        top5_ok=gtknown and record.gt_class in record.pred_top5,
        gtknown_ok=gtknown,
    )


def peak_iou(loc_map: Map2D, gt_mask: BinaryMask) -> tuple[float, int]:
    """Best mask IoU over all 256 binarization thresholds and the smallest
    threshold attaining it.

    The map is min-max normalized and quantized to u8; at threshold t the
    prediction is the strict super-level set (value > t).
    """
    if gt_mask.count == 0:
        raise DataError("ground-truth mask is empty")
    if (gt_mask.height, gt_mask.width) != (loc_map.height, loc_map.width):
        raise DataError(
            f"map extents {loc_map.height}x{loc_map.width} do not match "
            f"mask extents {gt_mask.height}x{gt_mask.width}"
        )
    q = quantize_u8(minmax_normalize(loc_map))
    hist_all = np.bincount(q.ravel(), minlength=256).astype(np.int64)
    hist_gt = np.bincount(q[gt_mask.bits == 1], minlength=256).astype(np.int64)
    # pixels with value > t, for t = 0..255
    above_all = hist_all.sum() - np.cumsum(hist_all)
    above_gt = hist_gt.sum() - np.cumsum(hist_gt)
    gt_total = int(gt_mask.count)
    union = above_all + gt_total - above_gt
    ious = above_gt / union  # union >= gt_total > 0
    best = int(np.argmax(ious))  # argmax takes the smallest t on ties
    return float(ious[best]), best


def classify_error(record: ImageRecord, pred: BBox) -> ErrorCase:
    """Assign exactly one outcome per image via a precedence cascade.

    Wrong class wins outright; a localized box is Correct; then a box
    touching two or more instances with enough ground-truth coverage is
    M-Ins; a box mostly inside the best-matched object is Part; a box
    swallowing most of that object is More; everything else is OT.
    """
    if record.pred_top1 != record.gt_class:
        return ErrorCase.CLS
    ious = [iou(pred, g) for g in record.gt_boxes]
    best_idx = int(np.argmax(ious))
    if ious[best_idx] >= 0.5:
        return ErrorCase.CORRECT
    touched = [g for g in record.gt_boxes if _intersection(pred, g) > 0.0]
    if len(touched) >= 2 and max(iog(pred, g) for g in touched) > 0.3:
        return ErrorCase.M_INS
    best_gt = record.gt_boxes[best_idx]
    if iop(pred, best_gt) > 0.5:
        return ErrorCase.PART
    if iog(pred, best_gt) > 0.7:
        return ErrorCase.MORE
    return ErrorCase.OT


# ---------------------------------------------------------------------------
# Annotation IO
# ---------------------------------------------------------------------------

def _field(obj: dict, idx: int, name: str, kind, required: bool = True):
    if name not in obj:
        if required:
            raise DataError(f"record {idx}: missing field '{name}'")
        return None
    val = obj[name]
    if val is None and not required:
        return None
    if kind is int and isinstance(val, bool):
        raise DataError(f"record {idx}: field '{name}' must be an integer")
    if kind is int and isinstance(val, float) and not val.is_integer():
        raise DataError(f"record {idx}: field '{name}' must be an integer")
    if kind is int and isinstance(val, float):
        val = int(val)
    if not isinstance(val, kind):
        raise DataError(f"record {idx}: field '{name}' must be {kind.__name__}")
    return val


def record_from_dict(obj: dict, idx: int = 0) -> ImageRecord:
    """Validate one annotation object and build an ImageRecord."""
    if not isinstance(obj, dict):
        raise DataError(f"record {idx}: expected an object")
    image_id = _field(obj, idx, "image_id", str)
    width = _field(obj, idx, "width", int)
    height = _field(obj, idx, "height", int)
    gt_class = _field(obj, idx, "gt_class", int)
    pred_top5 = _field(obj, idx, "pred_top5", list)
    if len(pred_top5) != 5 or not all(isinstance(c, int) and not isinstance(c, bool) for c in pred_top5):
        raise DataError(f"record {idx}: pred_top5 must be a list of 5 integer class ids")
    raw_boxes = _field(obj, idx, "gt_boxes", list)
    if not raw_boxes:
        raise DataError(f"record {idx}: gt_boxes must not be empty")
    boxes = []
    for b_i, b in enumerate(raw_boxes):
        if (not isinstance(b, list) or len(b) != 4
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in b)):
            raise DataError(f"record {idx}: gt_boxes[{b_i}] must be [x0, y0, x1, y1]")
        try:
            boxes.append(BBox(*(float(v) for v in b)))
        except SpaError as exc:
            raise DataError(f"record {idx}: gt_boxes[{b_i}]: {exc}") from exc
    gt_mask = _field(obj, idx, "gt_mask", str, required=False)
    map_path = _field(obj, idx, "map", str)
    try:
        return ImageRecord(
            image_id=image_id,
            width=width,
            height=height,
            gt_class=gt_class,
            pred_top5=tuple(pred_top5),
            gt_boxes=tuple(boxes),
            map_path=map_path,
            gt_mask_path=gt_mask,
        )
    except SpaError as exc:
        raise DataError(f"record {idx}: {exc}") from exc


def load_records(path) -> list[ImageRecord]:
    """Load and validate an annotation file (JSON array of records)."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, list) or not payload:
        raise DataError(f"{path}: annotation file must be a non-empty JSON array")
    return [record_from_dict(obj, i) for i, obj in enumerate(payload)]


# ---------------------------------------------------------------------------
# Dataset evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerImageResult:
    image_id: str
    iou: float | None
    peak_iou: float | None
    peak_t: int | None
    error_case: str | None
    top1_ok: bool = False
    top5_ok: bool = False
    gtknown_ok: bool = False
    full_image_fallback: bool = False
    failure: str | None = None


def _resolve(base_dir: str, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(base_dir) / p


def _evaluate_record(args) -> PerImageResult:
    record, base_dir, mode, theta = args
    try:
        loc_map = read_map(_resolve(base_dir, record.map_path))
        extracted = extract_bbox(loc_map, theta, record.width, record.height)
        outcome = loc_outcome(record, extracted.box)
        case = classify_error(record, extracted.box)
        best_iou = max(iou(extracted.box, g) for g in record.gt_boxes)
        pk_iou = pk_t = None
        if mode == "mask":
            if record.gt_mask_path is None:
                raise DataError(f"{record.image_id}: mask mode needs a gt_mask path")
            gt_mask = read_mask(_resolve(base_dir, record.gt_mask_path))
            if (gt_mask.height, gt_mask.width) != (record.height, record.width):
                raise DataError(
                    f"{record.image_id}: gt_mask extents do not match the image extents"
                )
            resized = resize_bilinear(loc_map, record.height, record.width)
            pk_iou, pk_t = peak_iou(resized, gt_mask)
        return PerImageResult(
            image_id=record.image_id,
            iou=best_iou,
            peak_iou=pk_iou,
            peak_t=pk_t,
            error_case=case.value,
            top1_ok=outcome.top1_ok,
            top5_ok=outcome.top5_ok,
            gtknown_ok=outcome.gtknown_ok,
            full_image_fallback=extracted.full_image_fallback,
        )
    except (SpaError, OSError) as exc:
        return PerImageResult(
            image_id=record.image_id, iou=None, peak_iou=None, peak_t=None,
            error_case=None, failure=str(exc),
        )


def evaluate_dataset(
    records: list[ImageRecord],
    mode: str = "box",
    theta: float = 0.2,
    jobs: int = 1,
    base_dir: str = ".",
) -> tuple[EvalReport, list[PerImageResult]]:
    """Evaluate every record; aggregation runs in fixed record order so the
    report is identical for any worker count. Unreadable inputs become
    per-image failures and the run continues."""
    if mode not in ("box", "mask"):
        raise UsageError(f"mode must be 'box' or 'mask', got {mode!r}")
    if not records:
        raise UsageError("no records to evaluate")
    tasks = [(r, base_dir, mode, theta) for r in records]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_record, tasks, chunksize=8))
    else:
        results = [_evaluate_record(t) for t in tasks]

    ok = [r for r in results if r.failure is None]
    n = len(ok)
    breakdown = {case.value: 0 for case in ErrorCase}
    top1 = top5 = gtk = 0
    peak_ious: list[float] = []
    peak_ts: list[int] = []
    for r in ok:
        breakdown[r.error_case] += 1
        top1 += r.top1_ok
        top5 += r.top5_ok
        gtk += r.gtknown_ok
        if r.peak_iou is not None:
            peak_ious.append(r.peak_iou)
            peak_ts.append(r.peak_t)
    if n == 0:
        raise DataError("every record failed to evaluate")
    report = EvalReport(
        top1_loc_err=100.0 * (n - top1) / n,
        top5_loc_err=100.0 * (n - top5) / n,
        gtknown_loc_err=100.0 * (n - gtk) / n,
        mean_peak_iou=(float(np.mean(peak_ious)) if peak_ious else None),
        mean_peak_t=(float(np.mean(peak_ts)) if peak_ts else None),
        error_breakdown=breakdown,
        n_images=n,
        mode=mode,
        theta=theta,
    )
    return report, results


def report_to_json(report: EvalReport) -> str:
    """Canonical byte-stable JSON rendering of a report."""
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def write_per_image_csv(results: list[PerImageResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "iou", "peak_iou", "peak_t", "error_case"])
        for r in results:
            writer.writerow([
                r.image_id,
                "" if r.iou is None else repr(r.iou),
                "" if r.peak_iou is None else repr(r.peak_iou),
                "" if r.peak_t is None else r.peak_t,
                r.error_case or "",
            ])
