"""Seeded synthetic ECG-like trace images for smoke tests and fixture corpora.

Dark traces on a white sheet with a faint grid. Each raw category has its own
waveform so that small models can separate them:

* ``flat``   a horizontal baseline with mild wander (stands in for Normal)
* ``spike``  a baseline with tall narrow QRS-like spikes (COVID19)
* ``wave``   a slow sinusoid (MI)
* ``notch``  a baseline with inverted dips (AHB)
* ``step``   a baseline with square steps (RecoveredMI)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imgproc import ImageU8, save_image

PATTERNS = ("flat", "spike", "wave", "notch", "step")


def trace_image(pattern: str, size: int = 64, rng: np.random.Generator | None = None) -> ImageU8:
    rng = rng or np.random.default_rng()
    h = w = size
    img = np.full((h, w), 245.0)
    grid = max(4, size // 8)
    off = int(rng.integers(0, grid))
    img[off::grid, :] = 215.0
    img[:, off::grid] = 215.0

    xs = np.arange(w, dtype=np.float64)
    base = h * rng.uniform(0.35, 0.65)
    y = base + rng.uniform(0.5, 1.5) * np.sin(xs / w * 2 * np.pi * rng.uniform(0.5, 1.5) + rng.uniform(0, 6.3))
    period = rng.uniform(0.22, 0.34) * w
    phase = rng.uniform(0, period)
    if pattern == "spike":
        for c in np.arange(phase, w, period):
            y -= h * rng.uniform(0.25, 0.35) * np.exp(-0.5 * ((xs - c) / (0.012 * w + 0.5)) ** 2)
    elif pattern == "wave":
        y += h * 0.15 * np.sin(2 * np.pi * (xs - phase) / period)
    elif pattern == "notch":
        for c in np.arange(phase, w, period):
            y += h * rng.uniform(0.18, 0.26) * np.exp(-0.5 * ((xs - c) / (0.03 * w + 0.5)) ** 2)
    elif pattern == "step":
        y += h * 0.12 * np.sign(np.sin(2 * np.pi * (xs - phase) / period))
    elif pattern != "flat":
        raise ValueError(f"unknown pattern {pattern!r}")

    # Draw with vertical fill between consecutive samples so steep edges stay connected.
    y = np.clip(y, 1, h - 2)
    for x in range(w):
        lo = y[x] if x == 0 else min(y[x], y[x - 1])
        hi = y[x] if x == 0 else max(y[x], y[x - 1])
        r0, r1 = int(np.floor(lo)), int(np.ceil(hi))
        img[r0:r1 + 1, x] = 30.0
    img += rng.normal(0, 4.0, img.shape)
    return ImageU8(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def trace_set(patterns, n_per_class: int, size: int = 64, seed: int = 0):
    """``(images, labels)`` with ``n_per_class`` images for each pattern, interleaved."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n_per_class):
        for label, pattern in enumerate(patterns):
            images.append(trace_image(pattern, size, rng))
            labels.append(label)
    return images, np.asarray(labels, dtype=np.int64)


def write_corpus(root, counts: dict[str, int], size: int = 64, seed: int = 0,
                 suffix: str = ".png") -> Path:
    """Write ``root/<RawClass>/<nnnn>.png`` for each raw class.

    ``counts`` maps raw class names (Normal, COVID19, MI, AHB, RecoveredMI) to
    image counts; the patterns are assigned in that order.
    """
    from .dataset import RawClass

    root = Path(root)
    rng = np.random.default_rng(seed)
    for raw, pattern in zip(RawClass, PATTERNS):
        n = counts.get(raw.value, 0)
        d = root / raw.value
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            save_image(trace_image(pattern, size, rng), d / f"{i:04d}{suffix}")
    return root
