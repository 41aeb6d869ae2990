"""Gradient-free class activation maps (Score-CAM) and heatmap overlays.

For a chosen layer, each activation channel is upsampled to the input size
and min-max normalized, then used as a soft mask on the input tensor. The
channel's score is the target-class logit on the masked input minus the logit
on an all-zero input. A softmax over those scores weights the channel masks.
The weighted sum is rectified and rescaled to [0, 1].
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClassOutOfRange, DimensionMismatch, NoActivationCapability
from .imgproc import ImageU8, resize_plane, round_u8, save_image


def _minmax(a: np.ndarray) -> np.ndarray | None:
    lo, hi = a.min(), a.max()
    if not hi > lo:
        return None
    return (a - lo) / (hi - lo)


def scorecam(backend, x, target_class: int, layer: str, return_weights: bool = False):
    """Heatmap of shape ``(H, W)`` with values in [0, 1] for one ``(C, H, W)`` input."""
    if not (hasattr(backend, "activations") and hasattr(backend, "logits")):
        raise NoActivationCapability("backend does not expose activations and logits")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionMismatch(f"expected a (C, H, W) input, got shape {x.shape}")
    _, h, w = x.shape
    k = getattr(backend, "num_classes", None)
    if target_class < 0 or (k is not None and target_class >= k):
        raise ClassOutOfRange(f"target class {target_class} outside [0, {k})")

    acts = backend.activations(x[None], layer)[0]
    if acts.ndim == 1:
        raise DimensionMismatch(f"layer {layer!r} has no spatial maps")
    masks = []
    for a in acts:
        up = a if a.shape == (h, w) else resize_plane(a, h, w)
        norm = _minmax(up)
        if norm is not None:
            masks.append(norm)

    if not masks:
        warnings.warn(f"all activation maps at {layer!r} are constant; heatmap is zero", stacklevel=2)
        zero = np.zeros((h, w))
        return (zero, np.zeros(0)) if return_weights else zero

    masks = np.stack(masks)
    batch = np.concatenate([np.zeros_like(x)[None], x[None] * masks[:, None, :, :]])
    logits = backend.logits(batch)
    if k is None and target_class >= logits.shape[1]:
        raise ClassOutOfRange(f"target class {target_class} outside [0, {logits.shape[1]})")
    scores = logits[1:, target_class] - logits[0, target_class]
    e = np.exp(scores - scores.max())
    weights = e / e.sum()

    cam = np.zeros((h, w))
    for wk, mk in zip(weights, masks):
        cam += wk * mk
    cam = np.maximum(cam, 0.0)
    norm = _minmax(cam)
    cam = np.zeros((h, w)) if norm is None else norm
    return (cam, weights) if return_weights else cam


def jet(values) -> np.ndarray:
    """Piecewise-linear jet colormap: [0, 1] -> RGB in [0, 1], shape ``(..., 3)``."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)[..., None]
    centres = np.array([0.75, 0.5, 0.25])  # r, g, b
    return np.clip(1.5 - np.abs(4.0 * (v - centres)), 0.0, 1.0)


def overlay(base: ImageU8, heatmap: np.ndarray, alpha: float = 0.5) -> ImageU8:
    """Alpha-blend the jet-coloured heatmap over ``base`` (gray is promoted to RGB)."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.shape != (base.height, base.width):
        raise DimensionMismatch(f"heatmap {heatmap.shape} vs image {(base.height, base.width)}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    rgb = base.pixels.astype(np.float64)
    if base.channels == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    blended = (1.0 - alpha) * rgb + alpha * 255.0 * jet(heatmap)
    return ImageU8(round_u8(blended))


def heatmap_image(heatmap: np.ndarray) -> ImageU8:
    return ImageU8(round_u8(np.asarray(heatmap) * 255.0))


@dataclass
class CamSample:
    id: str
    x: np.ndarray               # model input, (C, H, W)
    base: ImageU8               # image shown under the overlay, same H x W
    true_class: int | None = None


def _safe_name(sample_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", sample_id).strip("_") or "sample"


def cam_report(backend, samples, layer: str, out_dir, alpha: float = 0.5,
               class_names=None, target_class: int | None = None) -> list[Path]:
    """Write ``<id>_heatmap.png``, ``<id>_overlay.png`` and ``<id>.json`` per sample.

    The target class defaults to the model's predicted class.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    used = set()
    for s in samples:
        probs = backend.predict_proba(np.asarray(s.x)[None])[0]
        pred = int(np.argmax(probs))
        target = pred if target_class is None else target_class
        cam = scorecam(backend, s.x, target, layer)
        stem = _safe_name(re.sub(r"\.(png|ppm|pgm)$", "", s.id, flags=re.I))
        while stem in used:
            stem += "_"
        used.add(stem)
        heat_path = save_image(heatmap_image(cam), out_dir / f"{stem}_heatmap.png")
        over_path = save_image(overlay(s.base, cam, alpha), out_dir / f"{stem}_overlay.png")
        record = {
            "sample_id": s.id,
            "true_class": s.true_class,
            "predicted_class": pred,
            "target_class": target,
            "layer": layer,
            "probabilities": [float(p) for p in probs],
            "heatmap": heat_path.name,
            "overlay": over_path.name,
        }
        if class_names is not None:
            record["class_names"] = list(class_names)
        rec_path = out_dir / f"{stem}.json"
        rec_path.write_text(json.dumps(record, indent=1))
        written += [heat_path, over_path, rec_path]
    return written
