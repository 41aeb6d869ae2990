"""Versioned JSON container for a model spec plus its parameters."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import PipelineError
from .network import ModelSpec

FORMAT = "ecgtrace-params"
VERSION = 1


def save_checkpoint(path, spec: ModelSpec, params, extra: dict | None = None) -> Path:
    layers = {}
    for name, p in params.items():
        layers[name] = {
            key: {"shape": list(arr.shape), "dtype": str(arr.dtype),
                  "values": [float(v) for v in arr.reshape(-1)]}
            for key, arr in p.items()
        }
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "spec_hash": spec.digest(),
        "spec": spec.to_dict(),
        "extra": extra or {},
        "layers": layers,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))
    return path


def load_checkpoint(path):
    """Returns ``(spec, params, extra)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise PipelineError(f"{path}: not a version-{VERSION} {FORMAT} file")
    spec = ModelSpec.from_dict(doc["spec"])
    if spec.digest() != doc["spec_hash"]:
        raise PipelineError(f"{path}: spec hash mismatch")
    params = {}
    for name, layer in doc["layers"].items():
        params[name] = {
            key: np.asarray(entry["values"], dtype=entry["dtype"]).reshape(entry["shape"])
            for key, entry in layer.items()
        }
    expected = {n for n, _, _ in spec.learnable()}
    if set(params) != expected:
        raise PipelineError(f"{path}: layers {sorted(params)} do not match spec {sorted(expected)}")
    return spec, params, doc["extra"]
