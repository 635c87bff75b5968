"""Export intermediate backbone activations per image as SPT tensors.

Preprocessing is deterministic: resize to 256x256, center-crop 224,
ImageNet normalization. The exported coarse map per image is the channel
mean of the last requested layer. The manifest records the backbone, which
weights were actually used, and a SHA-256 per written file.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models

from .spt import write_spt

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# slice end (exclusive) into vgg16.features for each stage's final ReLU
_VGG16_STAGE_END = {"stage1": 4, "stage2": 9, "stage3": 16, "stage4": 23, "stage5": 30}
_RESNET18_LAYERS = ("layer1", "layer2", "layer3", "layer4")

# spatial/channel shape per layer for a 224x224 input, used as the shape oracle
LAYER_SHAPES = {
    "vgg16": {
        "stage1": (224, 224, 64), "stage2": (112, 112, 128), "stage3": (56, 56, 256),
        "stage4": (28, 28, 512), "stage5": (14, 14, 512),
    },
    "resnet18": {
        "layer1": (56, 56, 64), "layer2": (28, 28, 128),
        "layer3": (14, 14, 256), "layer4": (7, 7, 512),
    },
}


class ExportError(Exception):
    pass


@dataclass
class ExportManifest:
    backbone: str
    weights: str
    layers: list[str]
    preprocessing: str
    images: list[dict] = field(default_factory=list)
    checksums: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "weights": self.weights,
            "layers": self.layers,
            "preprocessing": self.preprocessing,
            "images": self.images,
            "checksums": self.checksums,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    def verify(self, base_dir) -> None:
        """Every listed file must exist and hash to its recorded checksum."""
        base = Path(base_dir)
        for name, digest in self.checksums.items():
            target = base / name
            if not target.exists():
                raise ExportError(f"manifest lists missing file {name}")
            if _sha256(target) != digest:
                raise ExportError(f"checksum mismatch for {name}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _preprocess(path) -> torch.Tensor:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((256, 256), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = arr[16:240, 16:240]  # center 224 crop
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(IMAGENET_STD, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1))[None]


def _build_backbone(model_id: str, pretrained: bool, seed: int):
    torch.manual_seed(seed)
    if model_id == "vgg16":
        weights = models.VGG16_Weights.IMAGENET1K_V1 if pretrained else None
        net = models.vgg16(weights=weights)
    elif model_id == "resnet18":
        weights = models.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
        net = models.resnet18(weights=weights)
    else:
        raise ExportError(f"unknown backbone {model_id!r} (supported: vgg16, resnet18)")
    net.eval()
    label = str(weights) if pretrained else f"random-init(seed={seed})"
    return net, label


def _layer_activations(model_id: str, net, x: torch.Tensor, layers: list[str]) -> dict[str, torch.Tensor]:
    out: dict[str, torch.Tensor] = {}
    if model_id == "vgg16":
        bad = [l for l in layers if l not in _VGG16_STAGE_END]
        if bad:
            raise ExportError(f"vgg16 has no layer(s) {bad}; choose from {sorted(_VGG16_STAGE_END)}")
        ends = {_VGG16_STAGE_END[l]: l for l in layers}
        h = x
        for i, module in enumerate(net.features):
            h = module(h)
            if i + 1 in ends:
                out[ends[i + 1]] = h
    else:
        bad = [l for l in layers if l not in _RESNET18_LAYERS]
        if bad:
            raise ExportError(f"resnet18 has no layer(s) {bad}; choose from {list(_RESNET18_LAYERS)}")
        h = net.maxpool(net.relu(net.bn1(net.conv1(x))))
        for name in _RESNET18_LAYERS:
            h = getattr(net, name)(h)
            if name in layers:
                out[name] = h
    return out


def export_features(model_id: str, image_dir, layers: list[str], out_dir,
                    pretrained: bool = True, seed: int = 0) -> ExportManifest:
    """One SPT per image per layer (H x W x C) plus a coarse map per image."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise ExportError(f"image directory {image_dir} does not exist")
    images = sorted(p for p in image_dir.iterdir()
                    if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not images:
        raise ExportError(f"no images found in {image_dir}")
    if not layers:
        raise ExportError("at least one layer name required")

    net, weights_label = _build_backbone(model_id, pretrained, seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ExportManifest(
        backbone=model_id,
        weights=weights_label,
        layers=list(layers),
        preprocessing="resize 256x256 bilinear, center-crop 224, imagenet mean/std",
    )
    with torch.no_grad():
        for img_path in images:
            image_id = img_path.stem
            acts = _layer_activations(model_id, net, _preprocess(img_path), list(layers))
            entry = {"image_id": image_id, "layers": {}, "cam": None}
            for name in layers:
                hwc = acts[name][0].permute(1, 2, 0).numpy()
                fname = f"{image_id}_{name}.spt"
                write_spt(hwc, out_dir / fname)
                entry["layers"][name] = fname
                manifest.checksums[fname] = _sha256(out_dir / fname)
            cam = acts[layers[-1]][0].mean(dim=0).numpy()
            cam_name = f"{image_id}_cam.spt"
            write_spt(cam, out_dir / cam_name)
            entry["cam"] = cam_name
            manifest.checksums[cam_name] = _sha256(out_dir / cam_name)
            manifest.images.append(entry)
    manifest.save(out_dir / "export_manifest.json")
    manifest.verify(out_dir)
    return manifest
