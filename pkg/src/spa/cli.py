"""Command-line front end: one subcommand per pipeline stage, JSON config
files mirroring flag names (flags > config file > defaults), and a run
manifest written next to each primary output."""
from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import SpaError, UsageError
from .evaluation import (
    evaluate_dataset,
    extract_bbox,
    load_records,
    report_to_json,
    write_per_image_csv,
)
from .fixtures import FixtureSpec, write_fixture_suite
from .ram import RamConfig, ScoreMap, loss_gradient, pseudo_masks, total_loss
from .scg import ScgConfig, scg_map
from .selfcorr import FeatureGrid, fuse_layers, hsc, resize_feature_grid
from .tensor import DenseTensor, Map2D, minmax_normalize, quantize_u8, read_map, read_tensor, write_map, write_tensor


@contextmanager
def _stage(timings: dict, name: str):
    t0 = time.perf_counter()
    yield
    timings[name] = round(time.perf_counter() - t0, 6)


def _write_manifest(path, command: str, config: dict, inputs, outputs, timings,
                    flags: dict | None = None, failures: list | None = None) -> None:
    doc = {
        "tool": "spa",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "timings_s": timings,
        "flags": flags or {},
    }
    if failures is not None:
        doc["failures"] = failures
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _manifest_path(manifest, out, command: str) -> Path:
    if manifest:
        return Path(manifest)
    if out:
        return Path(f"{out}.manifest.json")
    return Path(f"spa-{command}.manifest.json")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return cfg


def _merge_config(ctx: click.Context, cfg: dict) -> dict:
    """Overlay config-file values onto parameters left at their defaults."""
    names = {p.name for p in ctx.command.params} - {"config", "manifest"}
    unknown = set(cfg) - names
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for name in names:
        src = ctx.get_parameter_source(name)
        if name in cfg and src == click.core.ParameterSource.DEFAULT:
            merged[name] = cfg[name]
        else:
            merged[name] = ctx.params[name]
    return merged


def _parse_orders(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [p for p in str(value).split(",") if p.strip()]
    try:
        orders = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"orders must be a comma list of integers, got {value!r}") from exc
    if not orders:
        raise UsageError("orders must not be empty")
    return orders


def _read_feature_grids(features_arg: str) -> tuple[list[FeatureGrid], list[str]]:
    paths = [p for p in str(features_arg).split(",") if p]
    if not paths:
        raise UsageError("--features needs at least one path")
    return [FeatureGrid.from_tensor(read_tensor(p)) for p in paths], paths


@click.group()
@click.version_option(__version__, prog_name="spa")
def cli():
    """Self-correlation map refinement and localization evaluation."""


_config_opt = click.option("--config", default=None, help="JSON config file mirroring flag names.")
_manifest_opt = click.option("--manifest", default=None, help="Run-manifest path override.")


@cli.command("hsc")
@click.option("--features", required=True, help="Comma-separated feature SPT paths.")
@click.option("--orders", default="1,2", show_default=True, help="Correlation orders, e.g. 1,2.")
@click.option("--out", required=True, help="Output SPT path for the n x n matrix.")
@_config_opt
@_manifest_opt
@click.pass_context
def hsc_cmd(ctx, features, orders, out, config, manifest):
    """Fused self-correlation matrix for one or more feature layers."""
    cfg = _merge_config(ctx, _load_config_file(config))
    orders = _parse_orders(cfg["orders"])
    timings: dict = {}
    with _stage(timings, "load"):
        grids, paths = _read_feature_grids(cfg["features"])
    with _stage(timings, "correlate"):
        base_h, base_w = grids[0].height, grids[0].width
        mats = [hsc(resize_feature_grid(g, base_h, base_w), orders) for g in grids]
        mat = mats[0] if len(mats) == 1 else fuse_layers(mats)
    with _stage(timings, "write"):
        write_tensor(mat.to_tensor(), cfg["out"])
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "hsc"), "hsc",
        {"features": cfg["features"], "orders": list(orders), "out": cfg["out"]},
        paths, [cfg["out"]], timings,
    )


@cli.command("scg")
@click.option("--features", required=True, help="Comma-separated feature SPT paths.")
@click.option("--cam", "cam_path", required=True, help="Coarse activation map SPT.")
@click.option("--delta-h", default=0.7, show_default=True, help="Object seed threshold.")
@click.option("--delta-l", default=0.1, show_default=True, help="Background seed threshold.")
@click.option("--orders", default="1,2", show_default=True)
@click.option("--out", required=True, help="Output SPT path for the refined map.")
@_config_opt
@_manifest_opt
@click.pass_context
def scg_cmd(ctx, features, cam_path, delta_h, delta_l, orders, out, config, manifest):
    """Refine a coarse activation map with feature self-correlation."""
    cfg = _merge_config(ctx, _load_config_file(config))
    scfg = ScgConfig(
        delta_h=float(cfg["delta_h"]), delta_l=float(cfg["delta_l"]),
        orders=_parse_orders(cfg["orders"]),
    )
    timings: dict = {}
    with _stage(timings, "load"):
        grids, paths = _read_feature_grids(cfg["features"])
        cam = read_map(cfg["cam_path"])
    with _stage(timings, "refine"):
        result = scg_map(grids, cam, scfg)
    with _stage(timings, "write"):
        write_map(result.map, cfg["out"])
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "scg"), "scg",
        {"features": cfg["features"], "cam": cfg["cam_path"], "delta_h": scfg.delta_h,
         "delta_l": scfg.delta_l, "orders": list(scfg.orders), "out": cfg["out"]},
        paths + [cfg["cam_path"]], [cfg["out"]], timings,
        flags={
            "fallback_to_cam": result.fallback_to_cam,
            "object_seed_count": result.object_seed_count,
            "background_seed_count": result.background_seed_count,
        },
    )


@cli.command("ram-masks")
@click.option("--scores", required=True, help="Class-score SPT (H x W x C).")
@click.option("--tau", default=0.1, show_default=True)
@click.option("--sigma", default=0.1, show_default=True)
@click.option("--out-bg", required=True, help="Background mask SPT path.")
@click.option("--out-obj", required=True, help="Object mask SPT path.")
@_config_opt
@_manifest_opt
@click.pass_context
def ram_masks_cmd(ctx, scores, tau, sigma, out_bg, out_obj, config, manifest):
    """Coarse background/object pseudo-masks from channel-probability spread."""
    cfg = _merge_config(ctx, _load_config_file(config))
    rcfg = RamConfig(tau=float(cfg["tau"]), sigma=float(cfg["sigma"]))
    timings: dict = {}
    with _stage(timings, "load"):
        smap = ScoreMap.from_tensor(read_tensor(cfg["scores"]))
    with _stage(timings, "masks"):
        bg, obj = pseudo_masks(smap, rcfg)
    with _stage(timings, "write"):
        write_tensor(DenseTensor(bg.bits.astype(np.float32)), cfg["out_bg"])
        write_tensor(DenseTensor(obj.bits.astype(np.float32)), cfg["out_obj"])
    _write_manifest(
        _manifest_path(manifest, cfg["out_bg"], "ram-masks"), "ram-masks",
        {"scores": cfg["scores"], "tau": rcfg.tau, "sigma": rcfg.sigma,
         "out_bg": cfg["out_bg"], "out_obj": cfg["out_obj"]},
        [cfg["scores"]], [cfg["out_bg"], cfg["out_obj"]], timings,
    )


def _ram_config(cfg) -> RamConfig:
    return RamConfig(tau=float(cfg["tau"]), sigma=float(cfg["sigma"]), alpha=float(cfg["alpha"]))


@cli.command("loss")
@click.option("--scores", required=True, help="Class-score SPT (H x W x C).")
@click.option("--target", required=True, type=int, help="Ground-truth class index.")
@click.option("--tau", default=0.1, show_default=True)
@click.option("--sigma", default=0.1, show_default=True)
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--out", default=None, help="Optional JSON output path (stdout otherwise).")
@_config_opt
@_manifest_opt
@click.pass_context
def loss_cmd(ctx, scores, target, tau, sigma, alpha, out, config, manifest):
    """Total training loss: cross entropy plus the restricted-activation term."""
    cfg = _merge_config(ctx, _load_config_file(config))
    rcfg = _ram_config(cfg)
    timings: dict = {}
    with _stage(timings, "load"):
        smap = ScoreMap.from_tensor(read_tensor(cfg["scores"]))
    with _stage(timings, "loss"):
        report = total_loss(smap, int(cfg["target"]), rcfg)
    payload = json.dumps(
        {"l_ce": report.l_ce, "l_ra": report.l_ra, "total": report.total},
        sort_keys=True, indent=2,
    ) + "\n"
    outputs = []
    if cfg["out"]:
        Path(cfg["out"]).write_text(payload)
        outputs.append(cfg["out"])
    click.echo(payload, nl=False)
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "loss"), "loss",
        {"scores": cfg["scores"], "target": int(cfg["target"]), "tau": rcfg.tau,
         "sigma": rcfg.sigma, "alpha": rcfg.alpha, "out": cfg["out"]},
        [cfg["scores"]], outputs, timings,
    )


@cli.command("grad")
@click.option("--scores", required=True, help="Class-score SPT (H x W x C).")
@click.option("--target", required=True, type=int, help="Ground-truth class index.")
@click.option("--tau", default=0.1, show_default=True)
@click.option("--sigma", default=0.1, show_default=True)
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--out", required=True, help="Output SPT path for the gradient tensor.")
@_config_opt
@_manifest_opt
@click.pass_context
def grad_cmd(ctx, scores, target, tau, sigma, alpha, out, config, manifest):
    """Analytic gradient of the total loss with respect to the score tensor."""
    cfg = _merge_config(ctx, _load_config_file(config))
    rcfg = _ram_config(cfg)
    timings: dict = {}
    with _stage(timings, "load"):
        smap = ScoreMap.from_tensor(read_tensor(cfg["scores"]))
    with _stage(timings, "gradient"):
        grad = loss_gradient(smap, int(cfg["target"]), rcfg)
    with _stage(timings, "write"):
        write_tensor(grad, cfg["out"])
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "grad"), "grad",
        {"scores": cfg["scores"], "target": int(cfg["target"]), "tau": rcfg.tau,
         "sigma": rcfg.sigma, "alpha": rcfg.alpha, "out": cfg["out"]},
        [cfg["scores"]], [cfg["out"]], timings,
    )


@cli.command("bbox")
@click.option("--map", "map_path", required=True, help="Localization map SPT.")
@click.option("--width", required=True, type=int, help="Target image width.")
@click.option("--height", required=True, type=int, help="Target image height.")
@click.option("--theta", default=0.2, show_default=True, help="Binarization fraction.")
@click.option("--out", default=None, help="Optional JSON output path (stdout otherwise).")
@_config_opt
@_manifest_opt
@click.pass_context
def bbox_cmd(ctx, map_path, width, height, theta, out, config, manifest):
    """Tight box around the dominant blob of a localization map."""
    cfg = _merge_config(ctx, _load_config_file(config))
    timings: dict = {}
    with _stage(timings, "load"):
        loc = read_map(cfg["map_path"])
    with _stage(timings, "extract"):
        extracted = extract_bbox(loc, float(cfg["theta"]), int(cfg["width"]), int(cfg["height"]))
    payload = json.dumps(
        {"box": extracted.box.as_list(), "full_image_fallback": extracted.full_image_fallback},
        sort_keys=True, indent=2,
    ) + "\n"
    outputs = []
    if cfg["out"]:
        Path(cfg["out"]).write_text(payload)
        outputs.append(cfg["out"])
    click.echo(payload, nl=False)
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "bbox"), "bbox",
        {"map": cfg["map_path"], "width": int(cfg["width"]), "height": int(cfg["height"]),
         "theta": float(cfg["theta"]), "out": cfg["out"]},
        [cfg["map_path"]], outputs, timings,
        flags={"full_image_fallback": extracted.full_image_fallback},
    )


@cli.command("eval")
@click.option("--ann", required=True, help="Annotation JSON (array of image records).")
@click.option("--mode", type=click.Choice(["box", "mask"]), default="box", show_default=True)
@click.option("--theta", default=0.2, show_default=True, help="Box binarization fraction.")
@click.option("--jobs", type=int, default=None, envvar="SPA_JOBS",
              help="Worker processes (default: logical cores; SPA_JOBS mirrors this).")
@click.option("--out", required=True, help="Report JSON path.")
@click.option("--csv", "csv_path", default=None, help="Optional per-image CSV path.")
@_config_opt
@_manifest_opt
@click.pass_context
def eval_cmd(ctx, ann, mode, theta, jobs, out, csv_path, config, manifest):
    """Evaluate localization maps against ground truth."""
    cfg = _merge_config(ctx, _load_config_file(config))
    jobs_val = cfg["jobs"] if cfg["jobs"] is not None else (os.cpu_count() or 1)
    jobs_val = int(jobs_val)
    if jobs_val < 1:
        raise UsageError(f"--jobs must be >= 1, got {jobs_val}")
    timings: dict = {}
    with _stage(timings, "load"):
        records = load_records(cfg["ann"])
    with _stage(timings, "evaluate"):
        report, results = evaluate_dataset(
            records, mode=cfg["mode"], theta=float(cfg["theta"]),
            jobs=jobs_val, base_dir=str(Path(cfg["ann"]).parent),
        )
    with _stage(timings, "write"):
        Path(cfg["out"]).write_text(report_to_json(report))
        outputs = [cfg["out"]]
        if cfg["csv_path"]:
            write_per_image_csv(results, cfg["csv_path"])
            outputs.append(cfg["csv_path"])
    failures = [
        {"image_id": r.image_id, "error": r.failure} for r in results if r.failure
    ]
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "eval"), "eval",
        {"ann": cfg["ann"], "mode": cfg["mode"], "theta": float(cfg["theta"]),
         "jobs": jobs_val, "out": cfg["out"], "csv": cfg["csv_path"]},
        [cfg["ann"]], outputs, timings,
        flags={"n_failed": len(failures)}, failures=failures,
    )
    click.echo(report_to_json(report), nl=False)


@cli.command("synth")
@click.option("--out", required=True, help="Output directory for the bundle(s).")
@click.option("--count", default=1, show_default=True, type=int)
@click.option("--height", default=14, show_default=True, type=int)
@click.option("--width", default=14, show_default=True, type=int)
@click.option("--channels", default=8, show_default=True, type=int)
@click.option("--shape", type=click.Choice(["rect", "blob"]), default="rect", show_default=True)
@click.option("--coverage", default=0.25, show_default=True)
@click.option("--separation", default=90.0, show_default=True, help="Cluster angle, degrees.")
@click.option("--noise", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scale", default=4, show_default=True, type=int, help="Image/grid resolution ratio.")
@_config_opt
@_manifest_opt
@click.pass_context
def synth_cmd(ctx, out, count, height, width, channels, shape, coverage, separation,
              noise, seed, scale, config, manifest):
    """Generate synthetic feature/map/ground-truth bundles."""
    cfg = _merge_config(ctx, _load_config_file(config))
    spec = FixtureSpec(
        height=int(cfg["height"]), width=int(cfg["width"]), channels=int(cfg["channels"]),
        shape=cfg["shape"], coverage=float(cfg["coverage"]),
        separation_deg=float(cfg["separation"]), noise=float(cfg["noise"]),
        seed=int(cfg["seed"]), image_scale=int(cfg["scale"]),
    )
    timings: dict = {}
    with _stage(timings, "generate"):
        records = write_fixture_suite(spec, int(cfg["count"]), cfg["out"])
    out_dir = Path(cfg["out"])
    _write_manifest(
        _manifest_path(manifest, out_dir / "bundle", "synth"), "synth",
        {"out": cfg["out"], "count": int(cfg["count"]), "height": spec.height,
         "width": spec.width, "channels": spec.channels, "shape": spec.shape,
         "coverage": spec.coverage, "separation": spec.separation_deg,
         "noise": spec.noise, "seed": spec.seed, "scale": spec.image_scale},
        [], [str(out_dir / "annotations.json")] + [r["map"] for r in records], timings,
    )


def _jet_lut() -> np.ndarray:
    x = np.arange(256) / 255.0
    lut = np.stack([
        np.clip(1.5 - np.abs(4.0 * x - 3.0), 0.0, 1.0),
        np.clip(1.5 - np.abs(4.0 * x - 2.0), 0.0, 1.0),
        np.clip(1.5 - np.abs(4.0 * x - 1.0), 0.0, 1.0),
    ], axis=1)
    return np.floor(lut * 255.0 + 0.5).astype(np.uint8)


@cli.command("render")
@click.option("--map", "map_path", required=True, help="Map SPT to render.")
@click.option("--out", required=True, help="Output PNG path.")
@click.option("--colormap", type=click.Choice(["gray", "jet"]), default="gray", show_default=True)
@_config_opt
@_manifest_opt
@click.pass_context
def render_cmd(ctx, map_path, out, colormap, config, manifest):
    """Render a map as an 8-bit PNG heatmap."""
    from PIL import Image

    cfg = _merge_config(ctx, _load_config_file(config))
    timings: dict = {}
    with _stage(timings, "load"):
        loc = read_map(cfg["map_path"])
    with _stage(timings, "render"):
        q = quantize_u8(minmax_normalize(loc))
        if cfg["colormap"] == "gray":
            img = Image.fromarray(q, mode="L")
        else:
            img = Image.fromarray(_jet_lut()[q], mode="RGB")
        img.save(cfg["out"], format="PNG")
    _write_manifest(
        _manifest_path(manifest, cfg["out"], "render"), "render",
        {"map": cfg["map_path"], "out": cfg["out"], "colormap": cfg["colormap"]},
        [cfg["map_path"]], [cfg["out"]], timings,
    )


def main(argv=None) -> int:
    """Entry point with the documented exit codes (0 ok, 1 usage, 2 data)."""
    try:
        cli.main(args=argv, prog_name="spa", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        click.echo(f"spa: usage: {exc.format_message()}", err=True)
        return 1
    except UsageError as exc:
        click.echo(f"spa: {exc}", err=True)
        return 1
    except SpaError as exc:
        click.echo(f"spa: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"spa: io: {exc}", err=True)
        return 2
