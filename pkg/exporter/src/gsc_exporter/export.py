"""Dump cut-point features and the classifier head of a torch model into the
detection engine's container format (JSON manifest + little-endian f32 blobs).

The cut point names a module whose per-sample output is a flat vector
(trailing 1x1 spatial dims are squeezed; anything else is refused). Every
module that executes after it must be expressible as an affine layer with an
optional relu/tanh activation; otherwise the export refuses rather than
approximating, because a mismatched head would poison every gradient the
engine computes downstream.

Preprocessing is fixed (resize, center crop, ImageNet normalization, no
augmentation) and inference runs in eval mode, so identical inputs export
byte-identical blobs. Files are written atomically (temp + rename).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torch import nn
from torchvision import models as tv_models
from torchvision.transforms import functional as TF

FORMAT_VERSION = 1
DTYPE = "f32le"
VALID_LABELS = ("ID", "OOD", "calibration")

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]


class ExportError(ValueError):
    """Base class for export refusals."""


class ShapeError(ExportError):
    """Cut-point output is not a flat per-sample vector."""


class UnsupportedHeadError(ExportError):
    """A module after the cut point cannot be expressed as affine(+relu/tanh)."""


class SpecError(ExportError):
    """Malformed export spec."""


@dataclass(frozen=True)
class ExportSpec:
    model: dict  # {"kind": "torchvision", "name": ..., "weights": ..., "seed": ...}
    cut_point: str
    feature_sets: tuple  # of {"name", "label", "images": [paths]}
    output_dir: str
    image_size: int = 224
    batch_size: int = 32

    @staticmethod
    def from_json(path: str) -> "ExportSpec":
        with open(path) as fh:
            raw = json.load(fh)
        try:
            sets = tuple(raw["feature_sets"])
            spec = ExportSpec(
                model=dict(raw["model"]),
                cut_point=str(raw["cut_point"]),
                feature_sets=sets,
                output_dir=str(raw["output_dir"]),
                image_size=int(raw.get("image_size", 224)),
                batch_size=int(raw.get("batch_size", 32)),
            )
        except KeyError as exc:
            raise SpecError(f"export spec missing key: {exc}") from exc
        for fs in spec.feature_sets:
            if fs.get("label") not in VALID_LABELS:
                raise SpecError(f"feature set label must be one of {VALID_LABELS}, "
                                f"got {fs.get('label')!r}")
            if not fs.get("images"):
                raise SpecError(f"feature set {fs.get('name')!r} lists no images")
        return spec


def build_model(model_spec: dict) -> nn.Module:
    kind = model_spec.get("kind", "torchvision")
    if kind == "torchvision":
        name = model_spec["name"]
        weights = model_spec.get("weights")
        seed = int(model_spec.get("seed", 0))
        if weights is None:
            # deterministic random init for offline use
            torch.manual_seed(seed)
            model = tv_models.get_model(name, weights=None)
        else:
            model = tv_models.get_model(name, weights=weights)
    elif kind == "file":
        model = torch.load(model_spec["path"], weights_only=False)
        if not isinstance(model, nn.Module):
            raise SpecError(f"{model_spec['path']} does not hold an nn.Module")
    else:
        raise SpecError(f"unknown model kind {kind!r}")
    model.eval()
    return model


def preprocess(path: str, image_size: int) -> torch.Tensor:
    """Fixed eval-mode transform: resize, center crop, normalize."""
    img = Image.open(path).convert("RGB")
    resize_to = max(1, int(round(image_size * 8 / 7)))
    img = TF.resize(img, resize_to, antialias=True)
    img = TF.center_crop(img, [image_size, image_size])
    t = TF.to_tensor(img)
    return TF.normalize(t, IMAGENET_MEAN, IMAGENET_STD)


def _leaf_modules(model: nn.Module):
    for name, mod in model.named_modules():
        if name and not any(True for _ in mod.children()):
            yield name, mod


def _execution_order(model: nn.Module, probe: torch.Tensor) -> list[str]:
    order: list[str] = []
    handles = []
    for name, mod in _leaf_modules(model):
        handles.append(mod.register_forward_hook(
            lambda m, i, o, name=name: order.append(name)))
    try:
        with torch.no_grad():
            model(probe)
    finally:
        for h in handles:
            h.remove()
    return order


def _flatten_feature(out: torch.Tensor, cut_point: str) -> torch.Tensor:
    if not isinstance(out, torch.Tensor):
        raise ShapeError(f"cut point {cut_point!r} does not output a tensor")
    shape = tuple(out.shape[1:])
    squeezed = shape
    while len(squeezed) > 1 and squeezed[-1] == 1:
        squeezed = squeezed[:-1]
    if len(squeezed) != 1:
        raise ShapeError(
            f"cut point {cut_point!r} outputs per-sample shape {shape}, "
            "which is not a flat vector"
        )
    return out.reshape(out.shape[0], -1)


@dataclass
class HeadLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "none"


def extract_head(model: nn.Module, order: list[str], cut_point: str) -> list[HeadLayer]:
    """Map the modules that run after the cut point onto affine(+act) layers."""
    if cut_point not in order:
        raise SpecError(f"cut point {cut_point!r} is not a leaf module of the model "
                        f"(saw: {', '.join(order[:8])}...)")
    tail = order[order.index(cut_point) + 1:]
    if not tail:
        raise UnsupportedHeadError("no modules execute after the cut point")
    mods = dict(_leaf_modules(model))
    layers: list[HeadLayer] = []
    for name in tail:
        mod = mods[name]
        if isinstance(mod, nn.Linear):
            w = mod.weight.detach().cpu().numpy().astype(np.float32)
            b = (mod.bias.detach().cpu().numpy().astype(np.float32)
                 if mod.bias is not None else np.zeros(w.shape[0], dtype=np.float32))
            layers.append(HeadLayer(weight=w, bias=b))
        elif isinstance(mod, (nn.ReLU, nn.Tanh)):
            act = "relu" if isinstance(mod, nn.ReLU) else "tanh"
            if not layers or layers[-1].activation != "none":
                raise UnsupportedHeadError(
                    f"activation module {name!r} has no affine layer to attach to")
            layers[-1].activation = act
        elif isinstance(mod, (nn.Dropout, nn.Identity, nn.Flatten)):
            continue  # eval-mode no-ops on a flat vector
        else:
            raise UnsupportedHeadError(
                f"head contains unsupported layer {name!r} ({type(mod).__name__})")
    if not layers:
        raise UnsupportedHeadError("head has no affine layer")
    if layers[-1].activation != "none":
        raise UnsupportedHeadError("head ends with an activation; the engine "
                                   "requires a final affine layer")
    return layers


def _extract_features(model: nn.Module, cut_module: nn.Module, cut_point: str,
                      paths, image_size: int, batch_size: int) -> np.ndarray:
    captured: list[torch.Tensor] = []

    def hook(mod, inputs, output):
        captured.append(_flatten_feature(output, cut_point).detach().cpu())

    handle = cut_module.register_forward_hook(hook)
    feats: list[np.ndarray] = []
    try:
        with torch.no_grad():
            for start in range(0, len(paths), batch_size):
                batch_paths = paths[start:start + batch_size]
                batch = torch.stack([preprocess(p, image_size) for p in batch_paths])
                captured.clear()
                model(batch)
                if not captured:
                    raise SpecError(f"cut point {cut_point!r} never fired")
                feats.append(captured[-1].numpy().astype(np.float32))
    finally:
        handle.remove()
    return np.concatenate(feats, axis=0)


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def export(spec: ExportSpec) -> str:
    """Run the export; returns the manifest path."""
    model = build_model(spec.model)
    probe = torch.zeros(1, 3, spec.image_size, spec.image_size)
    order = _execution_order(model, probe)
    head = extract_head(model, order, spec.cut_point)
    cut_module = dict(_leaf_modules(model))[spec.cut_point]

    out = spec.output_dir
    os.makedirs(out, exist_ok=True)

    head_specs = []
    in_dim = None
    for i, layer in enumerate(head):
        wf, bf = f"head_{i}_weight.bin", f"head_{i}_bias.bin"
        _atomic_write(os.path.join(out, wf), layer.weight.astype("<f4").tobytes())
        _atomic_write(os.path.join(out, bf), layer.bias.astype("<f4").tobytes())
        rows, cols = layer.weight.shape
        if in_dim is not None and cols != in_dim:
            raise UnsupportedHeadError(
                f"head layer {i} expects {cols} inputs, previous layer gives {in_dim}")
        in_dim = rows
        head_specs.append({"weight_file": wf, "bias_file": bf, "rows": rows,
                           "cols": cols, "activation": layer.activation})
    d = head[0].weight.shape[1]
    k = head[-1].weight.shape[0]

    set_specs = []
    for fs in spec.feature_sets:
        feats = _extract_features(model, cut_module, spec.cut_point,
                                  list(fs["images"]), spec.image_size,
                                  spec.batch_size)
        if feats.shape[1] != d:
            raise ShapeError(
                f"cut point emits {feats.shape[1]} features but the head "
                f"expects {d}")
        fn = f"features_{fs['name']}.bin"
        _atomic_write(os.path.join(out, fn), feats.astype("<f4").tobytes())
        set_specs.append({"name": fs["name"], "label": fs["label"],
                          "count": int(feats.shape[0]), "file": fn})

    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": DTYPE,
        "d": int(d),
        "K": int(k),
        "head": head_specs,
        "feature_sets": set_specs,
    }
    manifest_path = os.path.join(out, "manifest.json")
    _atomic_write(manifest_path,
                  (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest_path
