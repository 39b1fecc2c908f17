"""Serialization of trained fusion parameters: SEMV vector file plus JSON manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..encoding import read_vectors, write_vectors
from ..errors import DataError
from .models import FusionModel


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_model(model: FusionModel, directory, config: dict | None = None) -> tuple[Path, Path]:
    """Write ``params.semv`` (one row holding the flat vector) and ``manifest.json``.

    Parameters are stored as float32, so a reload is exact only up to that
    precision; the manifest records the float64 SHA-256 for auditing.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vec_path = directory / "params.semv"
    man_path = directory / "manifest.json"
    write_vectors(vec_path, model.params[None, :])
    manifest = {
        "kind": model.kind,
        "dims": {"text": model.text_dim, "vision": model.vision_dim, "output": model.output_dim},
        "seed": model.seed,
        "n_params": int(model.params.size),
        "slices": {n: [s.start, s.stop, list(shape)] for n, (s, shape) in model.slices.items()},
        "config": config or {},
        "config_hash": config_hash(config or {}),
        "params_sha256": hashlib.sha256(model.params.tobytes()).hexdigest(),
    }
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return vec_path, man_path


def load_model(directory) -> FusionModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    flat = read_vectors(directory / "params.semv")
    if flat.shape[0] != 1 or flat.shape[1] != manifest["n_params"]:
        raise DataError(f"{directory}: parameter file does not match manifest")
    dims = manifest["dims"]
    return FusionModel(manifest["kind"], dims["text"], dims["vision"],
                       flat[0].astype(np.float64), manifest["seed"])
