"""Dataset/head container: JSON manifest plus raw little-endian f32 blobs.

The format is deliberately ecosystem-neutral: any ML stack can dump a
manifest, weight/bias blobs, and per-split feature blobs. Blobs are
row-major 32-bit floats; the engine widens everything to 64-bit on load
and cross-checks every dimension against the manifest before use.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BlobLengthError,
    DimMismatchError,
    MissingBlobError,
    UnknownActivationError,
    VersionMismatchError,
)
from .head import ACTIVATIONS, HeadModel, LayerSpec
from .synth import SynthDataset

FORMAT_VERSION = 1
DTYPE = "f32le"

VALID_LABELS = ("ID", "OOD", "calibration")


@dataclass(frozen=True)
class FeatureSet:
    name: str
    label: str  # ID | OOD | calibration
    features: np.ndarray  # (count, d) float64


@dataclass(frozen=True)
class LoadedDataset:
    head: HeadModel
    feature_sets: tuple[FeatureSet, ...]
    d: int
    K: int

    def by_label(self, label: str) -> list[FeatureSet]:
        return [fs for fs in self.feature_sets if fs.label == label]


def _read_blob(path: str, expected_count: int, name: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise MissingBlobError(f"blob not found: {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != expected_count:
        raise BlobLengthError(
            f"{name}: {path} holds {raw.size} f32 values, manifest implies {expected_count}"
        )
    return raw.astype(np.float64)


def _write_blob(path: str, arr: np.ndarray) -> None:
    arr.astype("<f4").tofile(path)


def load_dataset(manifest_path: str) -> LoadedDataset:
    """Parse and validate a manifest directory into engine objects."""
    with open(manifest_path) as fh:
        man = json.load(fh)
    if man.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format_version {man.get('format_version')!r}, engine supports {FORMAT_VERSION}"
        )
    if man.get("dtype") != DTYPE:
        raise VersionMismatchError(f"dtype {man.get('dtype')!r}, engine supports {DTYPE!r}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    d = int(man["d"])
    k = int(man["K"])

    layers = []
    in_dim = d
    for i, spec in enumerate(man["head"]):
        rows, cols = int(spec["rows"]), int(spec["cols"])
        act = spec.get("activation", "none")
        if act not in ACTIVATIONS:
            raise UnknownActivationError(f"head layer {i}: unknown activation {act!r}")
        if cols != in_dim:
            raise DimMismatchError(
                f"head layer {i}: expects {cols} inputs but receives {in_dim}"
            )
        w = _read_blob(os.path.join(base, spec["weight_file"]), rows * cols,
                       f"head layer {i} weight").reshape(rows, cols)
        b = _read_blob(os.path.join(base, spec["bias_file"]), rows,
                       f"head layer {i} bias")
        layers.append(LayerSpec(weight=w, bias=b, activation=act))
        in_dim = rows
    if in_dim != k:
        raise DimMismatchError(f"head ends with {in_dim} outputs, manifest says K={k}")
    head = HeadModel(layers=tuple(layers))

    sets = []
    for spec in man["feature_sets"]:
        label = spec["label"]
        if label not in VALID_LABELS:
            raise DimMismatchError(f"feature set {spec['name']!r}: bad label {label!r}")
        count = int(spec["count"])
        feats = _read_blob(os.path.join(base, spec["file"]), count * d,
                           f"feature set {spec['name']}").reshape(count, d)
        sets.append(FeatureSet(name=spec["name"], label=label, features=feats))
    return LoadedDataset(head=head, feature_sets=tuple(sets), d=d, K=k)


def save_dataset(out_dir: str, head: HeadModel, feature_sets) -> str:
    """Write head + feature splits as a manifest directory; returns the
    manifest path. ``feature_sets`` is an iterable of (name, label, array)."""
    os.makedirs(out_dir, exist_ok=True)
    head_specs = []
    for i, layer in enumerate(head.layers):
        wf, bf = f"head_{i}_weight.bin", f"head_{i}_bias.bin"
        _write_blob(os.path.join(out_dir, wf), layer.weight)
        _write_blob(os.path.join(out_dir, bf), layer.bias)
        head_specs.append({
            "weight_file": wf,
            "bias_file": bf,
            "rows": layer.out_dim,
            "cols": layer.in_dim,
            "activation": layer.activation,
        })
    set_specs = []
    for name, label, arr in feature_sets:
        arr = np.asarray(arr, dtype=np.float64)
        fn = f"features_{name}.bin"
        _write_blob(os.path.join(out_dir, fn), arr)
        set_specs.append({
            "name": name,
            "label": label,
            "count": int(arr.shape[0]),
            "file": fn,
        })
    man = {
        "format_version": FORMAT_VERSION,
        "dtype": DTYPE,
        "d": head.input_dim,
        "K": head.output_dim,
        "head": head_specs,
        "feature_sets": set_specs,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def save_synth_dataset(out_dir: str, ds: SynthDataset) -> str:
    return save_dataset(out_dir, ds.head, [
        ("id", "ID", ds.id_features),
        ("ood", "OOD", ds.ood_features),
        ("calibration", "calibration", ds.cal_features),
    ])
