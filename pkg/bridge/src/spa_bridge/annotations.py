"""Convert source annotations into the spa eval JSON schema.

Supported source formats:

- ``csv-xywh``: header ``image_id,width,height,gt_class,pred_top5,x,y,w,h``
  plus optional ``map`` and ``gt_mask`` columns; ``pred_top5`` is
  semicolon-separated; one row per box, rows sharing an image_id merge.
- ``json-xywh``: JSON array of objects with the same fields, ``bbox`` being
  ``[x, y, w, h]`` and ``pred_top5`` a list.

Boxes convert from (x, y, w, h) to half-open [x0, y0, x1, y1] pixel
coordinates.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path


class ConvertError(Exception):
    pass


def _xywh_to_box(x, y, w, h, where: str) -> list[float]:
    if w <= 0 or h <= 0:
        raise ConvertError(f"{where}: box width/height must be positive, got w={w} h={h}")
    return [float(x), float(y), float(x) + float(w), float(y) + float(h)]


def _parse_top5(raw, where: str) -> list[int]:
    if isinstance(raw, str):
        parts = [p for p in raw.split(";") if p.strip()]
    else:
        parts = list(raw)
    try:
        top5 = [int(p) for p in parts]
    except (TypeError, ValueError) as exc:
        raise ConvertError(f"{where}: pred_top5 must hold integers, got {raw!r}") from exc
    if len(top5) != 5:
        raise ConvertError(f"{where}: pred_top5 must hold 5 class ids, got {len(top5)}")
    return top5


def _merge_row(records: dict, order: list, image_id: str, fields: dict, box, where: str):
    if image_id not in records:
        records[image_id] = {
            "image_id": image_id,
            "width": fields["width"],
            "height": fields["height"],
            "gt_class": fields["gt_class"],
            "pred_top5": fields["pred_top5"],
            "gt_boxes": [],
            "gt_mask": fields.get("gt_mask"),
            "map": fields["map"],
        }
        order.append(image_id)
    else:
        known = records[image_id]
        for key in ("width", "height", "gt_class"):
            if known[key] != fields[key]:
                raise ConvertError(f"{where}: {key} disagrees with an earlier row for {image_id}")
    records[image_id]["gt_boxes"].append(box)


def _rows_from_csv(src_path):
    with open(src_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"image_id", "width", "height", "gt_class", "pred_top5", "x", "y", "w", "h"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise ConvertError(f"{src_path}: missing columns {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):  # header is line 1
            yield line_no, row


def convert_annotations(src_format: str, src_path, out_json) -> int:
    """Write the converted annotation array; returns the record count."""
    src_path = Path(src_path)
    records: dict = {}
    order: list = []

    if src_format == "csv-xywh":
        for line_no, row in _rows_from_csv(src_path):
            where = f"{src_path.name}:{line_no}"
            try:
                fields = {
                    "width": int(row["width"]),
                    "height": int(row["height"]),
                    "gt_class": int(row["gt_class"]),
                    "pred_top5": _parse_top5(row["pred_top5"], where),
                    "map": row.get("map") or f"{row['image_id']}_cam.spt",
                    "gt_mask": row.get("gt_mask") or None,
                }
                box = _xywh_to_box(float(row["x"]), float(row["y"]),
                                   float(row["w"]), float(row["h"]), where)
            except ConvertError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ConvertError(f"{where}: malformed row ({exc})") from exc
            _merge_row(records, order, row["image_id"], fields, box, where)
    elif src_format == "json-xywh":
        try:
            payload = json.loads(src_path.read_text())
        except json.JSONDecodeError as exc:
            raise ConvertError(f"{src_path}: not valid JSON ({exc})") from exc
        if not isinstance(payload, list):
            raise ConvertError(f"{src_path}: expected a JSON array")
        for i, row in enumerate(payload):
            where = f"{src_path.name}[{i}]"
            try:
                fields = {
                    "width": int(row["width"]),
                    "height": int(row["height"]),
                    "gt_class": int(row["gt_class"]),
                    "pred_top5": _parse_top5(row["pred_top5"], where),
                    "map": row.get("map") or f"{row['image_id']}_cam.spt",
                    "gt_mask": row.get("gt_mask"),
                }
                x, y, w, h = row["bbox"]
                box = _xywh_to_box(x, y, w, h, where)
            except ConvertError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ConvertError(f"{where}: malformed row ({exc})") from exc
            _merge_row(records, order, row["image_id"], fields, box, where)
    else:
        raise ConvertError(f"unknown source format {src_format!r} (supported: csv-xywh, json-xywh)")

    if not order:
        raise ConvertError(f"{src_path}: no records converted")
    out = [records[image_id] for image_id in order]
    Path(out_json).write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    return len(out)
