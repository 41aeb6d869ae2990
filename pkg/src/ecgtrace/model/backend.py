"""Prediction backends consumed by evaluation and Score-CAM."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import LayerNotFound, MissingSample, PipelineError
from .network import ModelSpec, forward

NORMALIZATION_TOL = 1e-4


@runtime_checkable
class Backend(Protocol):
    def predict_proba(self, batch) -> np.ndarray: ...


@runtime_checkable
class ActivationBackend(Backend, Protocol):
    """A backend that can also expose logits and internal feature maps."""

    def logits(self, batch) -> np.ndarray: ...

    def activations(self, batch, layer: str) -> np.ndarray: ...


class CNNBackend:
    """Eval-mode wrapper around a trained from-scratch network."""

    def __init__(self, spec: ModelSpec, params, batch_size: int = 64):
        self.spec = spec
        self.params = params
        self.batch_size = batch_size

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def _run(self, batch):
        x = np.asarray(batch)
        if x.ndim == 3:
            x = x[None]
        for start in range(0, len(x), self.batch_size):
            yield forward(self.spec, self.params, x[start:start + self.batch_size], train_mode=False)

    def predict_proba(self, batch) -> np.ndarray:
        return np.concatenate([r.probabilities for r in self._run(batch)]).astype(np.float64)

    def logits(self, batch) -> np.ndarray:
        return np.concatenate([r.logits for r in self._run(batch)]).astype(np.float64)

    def activations(self, batch, layer: str) -> np.ndarray:
        if layer not in self.spec.layer_names:
            raise LayerNotFound(f"layer {layer!r} not in model ({', '.join(self.spec.layer_names)})")
        return np.concatenate([r.activation(layer) for r in self._run(batch)]).astype(np.float64)


class PredictionsBackend:
    """Replays a per-sample probability table; ``predict_proba`` takes sample ids."""

    def __init__(self, table: dict[str, np.ndarray]):
        widths = {len(v) for v in table.values()}
        if len(widths) > 1:
            raise PipelineError("prediction rows have differing class counts")
        self.num_classes = widths.pop() if widths else 0
        self.table = {}
        for sid, row in table.items():
            row = np.asarray(row, dtype=np.float64)
            if np.any(~np.isfinite(row)) or np.any(row < 0) or row.sum() <= 0:
                raise PipelineError(f"sample {sid!r}: probabilities must be finite, non-negative, not all zero")
            total = row.sum()
            if abs(total - 1.0) > NORMALIZATION_TOL:
                warnings.warn(f"sample {sid!r}: row sums to {total:.6g}, renormalizing", stacklevel=2)
            self.table[sid] = row / total

    @classmethod
    def from_csv(cls, path) -> PredictionsBackend:
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0].strip() != "sample_id":
                raise PipelineError(f"{path}: header must start with sample_id")
            table = {}
            for line in reader:
                if not line:
                    continue
                if line[0] in table:
                    raise PipelineError(f"{path}: duplicate sample id {line[0]!r}")
                table[line[0]] = [float(v) for v in line[1:]]
        return cls(table)

    def predict_proba(self, batch) -> np.ndarray:
        if isinstance(batch, str):
            batch = [batch]
        missing = [sid for sid in batch if sid not in self.table]
        if missing:
            raise MissingSample(f"no predictions for {len(missing)} sample(s), e.g. {missing[0]!r}")
        return np.stack([self.table[sid] for sid in batch]) if batch else np.zeros((0, self.num_classes))


def predictions_backend(path) -> PredictionsBackend:
    return PredictionsBackend.from_csv(path)


def write_predictions(path, ids, probabilities) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    probabilities = np.asarray(probabilities)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"p_{k}" for k in range(probabilities.shape[1])])
        for sid, row in zip(ids, probabilities):
            w.writerow([sid] + [repr(float(v)) for v in row])
    return path
