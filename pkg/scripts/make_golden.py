#!/usr/bin/env python3
"""Regenerate the committed 4-image CLI fixture and its golden eval report.

The golden report is produced by the serial path (--jobs 1); the CLI test
compares future runs against these bytes. Rerun only when the observable
pipeline intentionally changes, and commit the result.
"""
import shutil
import sys
from pathlib import Path

from spa.cli import main

GOLDEN_DIR = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden4"


def run(argv):
    code = main(argv)
    if code != 0:
        sys.exit(f"command failed ({code}): {argv}")


if __name__ == "__main__":
    if GOLDEN_DIR.exists():
        shutil.rmtree(GOLDEN_DIR)
    run([
        "synth", "--out", str(GOLDEN_DIR), "--count", "4", "--seed", "1234",
        "--height", "12", "--width", "12", "--channels", "6", "--scale", "3",
    ])
    run([
        "eval", "--ann", str(GOLDEN_DIR / "annotations.json"), "--mode", "box",
        "--jobs", "1", "--out", str(GOLDEN_DIR / "golden_report.json"),
        "--csv", str(GOLDEN_DIR / "golden_per_image.csv"),
        "--manifest", str(GOLDEN_DIR / "golden_report.json.manifest.json"),
    ])
    # manifests carry wall times; drop them so the fixture stays deterministic
    for mf in GOLDEN_DIR.glob("*.manifest.json"):
        mf.unlink()
    print(f"golden fixture written to {GOLDEN_DIR}")
