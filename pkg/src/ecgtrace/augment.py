"""Class-balancing augmentation: replication planning and geometric transforms.

Every class in a training split is replicated ``factor`` times. Replica ``r``
uses one strategy, cycling rotate -> scale -> translate on ``r``. Its
parameters come from a generator seeded by ``(seed, class)``, so a plan can
be rebuilt from its JSON record.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CountMismatch, EmptyClass
from .imgproc import ImageU8, round_u8

DEFAULT_TARGET = 2500
FILL_VALUE = 255

ROTATE_RANGE = (5.0, 10.0)
SCALE_RANGE = (1.025, 1.10)
TRANSLATE_RANGE = (0.05, 0.20)
KINDS = ("rotate", "scale", "translate")


@dataclass(frozen=True)
class TransformSpec:
    """One geometric transform.

    ``angle`` is in degrees, positive = counter-clockwise on screen. ``factor``
    is a zoom-in magnification. ``dx``/``dy`` shift the sampling window by a
    fraction of width/height: output pixel ``(x, y)`` reads source pixel
    ``(x + dx*W, y + dy*H)``.
    """

    kind: str
    angle: float = 0.0
    factor: float = 1.0
    dx: float = 0.0
    dy: float = 0.0

    def validate(self) -> None:
        eps = 1e-12
        if self.kind == "rotate":
            ok = ROTATE_RANGE[0] - eps <= abs(self.angle) <= ROTATE_RANGE[1] + eps
        elif self.kind == "scale":
            ok = SCALE_RANGE[0] - eps <= self.factor <= SCALE_RANGE[1] + eps
        elif self.kind == "translate":
            lo, hi = TRANSLATE_RANGE
            ok = lo - eps <= abs(self.dx) <= hi + eps and lo - eps <= abs(self.dy) <= hi + eps
        else:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not ok:
            raise ValueError(f"transform parameters out of range: {self}")

    def to_dict(self) -> dict:
        if self.kind == "rotate":
            return {"kind": "rotate", "angle": self.angle}
        if self.kind == "scale":
            return {"kind": "scale", "factor": self.factor}
        return {"kind": "translate", "dx": self.dx, "dy": self.dy}

    @classmethod
    def from_dict(cls, d: dict) -> TransformSpec:
        return cls(**d)


@dataclass(frozen=True)
class ClassPlan:
    name: str
    source_count: int
    factor: int
    replicas: tuple[tuple[int, TransformSpec], ...] = field(default=())

    @property
    def total(self) -> int:
        return self.source_count * self.factor

    def to_dict(self) -> dict:
        return {
            "class": self.name,
            "source_count": self.source_count,
            "factor": self.factor,
            "replicas": [{"source": s, **t.to_dict()} for s, t in self.replicas],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClassPlan:
        replicas = []
        for r in d["replicas"]:
            r = dict(r)
            src = r.pop("source")
            replicas.append((src, TransformSpec.from_dict(r)))
        return cls(d["class"], d["source_count"], d["factor"], tuple(replicas))


@dataclass(frozen=True)
class AugmentPlan:
    seed: int
    target: int
    classes: dict[str, ClassPlan]

    def __getitem__(self, name) -> ClassPlan:
        return self.classes[str(name)]

    def totals(self) -> dict[str, int]:
        return {name: p.total for name, p in self.classes.items()}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "target": self.target,
            "classes": [p.to_dict() for p in self.classes.values()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> AugmentPlan:
        classes = {c["class"]: ClassPlan.from_dict(c) for c in d["classes"]}
        return cls(d["seed"], d["target"], classes)

    @classmethod
    def from_json(cls, text: str) -> AugmentPlan:
        return cls.from_dict(json.loads(text))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _class_rng(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, key])


def _draw(kind: str, u: np.ndarray) -> TransformSpec:
    # u holds five uniforms; every replica consumes five regardless of kind.
    sign = lambda v: 1.0 if v < 0.5 else -1.0  # noqa: E731
    if kind == "rotate":
        lo, hi = ROTATE_RANGE
        return TransformSpec("rotate", angle=sign(u[1]) * (lo + (hi - lo) * u[0]))
    if kind == "scale":
        lo, hi = SCALE_RANGE
        return TransformSpec("scale", factor=lo + (hi - lo) * u[0])
    lo, hi = TRANSLATE_RANGE
    return TransformSpec(
        "translate",
        dx=sign(u[1]) * (lo + (hi - lo) * u[0]),
        dy=sign(u[3]) * (lo + (hi - lo) * u[2]),
    )


def plan_balance(class_counts, target: int = DEFAULT_TARGET, overrides=None, seed: int = 0) -> AugmentPlan:
    """Plan how many replicas each class gets so the classes come out roughly equal.

    Args:
        class_counts: mapping class name -> number of training images.
        target: desired per-class total; ``factor = max(1, round(target / count))``.
        overrides: optional mapping class name -> factor, taking precedence.
        seed: seeds the transform parameters.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    overrides = {str(k): int(v) for k, v in (overrides or {}).items()}
    classes = {}
    for name, count in class_counts.items():
        name = str(name)
        count = int(count)
        if count <= 0:
            raise EmptyClass(f"class {name!r} has no training images")
        if name in overrides:
            factor = overrides[name]
            if factor < 1:
                raise ValueError(f"override factor for {name!r} must be >= 1")
        else:
            factor = max(1, _round_half_up(target / count))
        n_rep = count * (factor - 1)
        rng = _class_rng(seed, name)
        draws = rng.random((n_rep, 5))
        replicas = tuple(
            (r // (factor - 1), _draw(KINDS[r % 3], draws[r])) for r in range(n_rep)
        )
        classes[name] = ClassPlan(name, count, factor, replicas)
    return AugmentPlan(seed, target, classes)


def _inverse_map(t: TransformSpec, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    if t.kind == "rotate":
        # y grows downward, so a counter-clockwise turn on screen is a negative
        # angle in array coordinates; the inverse map rotates back by +angle.
        a = math.radians(t.angle)
        c, s = math.cos(a), math.sin(a)
        u, v = xs - cx, ys - cy
        return cx + c * u - s * v, cy + s * u + c * v
    if t.kind == "scale":
        return cx + (xs - cx) / t.factor, cy + (ys - cy) / t.factor
    if t.kind == "translate":
        return xs + t.dx * w, ys + t.dy * h
    raise ValueError(f"unknown transform kind {t.kind!r}")


def sample_with_fill(pixels: np.ndarray, sx: np.ndarray, sy: np.ndarray, fill: float = FILL_VALUE) -> np.ndarray:
    """Bilinear sampling of ``(H, W, C)`` pixels; neighbours outside the image read ``fill``."""
    h, w, c = pixels.shape
    padded = np.full((h + 2, w + 2, c), float(fill))
    padded[1:-1, 1:-1] = pixels
    px = np.clip(sx + 1.0, 0.0, w + 1.0)
    py = np.clip(sy + 1.0, 0.0, h + 1.0)
    x0 = np.minimum(np.floor(px).astype(np.intp), w)
    y0 = np.minimum(np.floor(py).astype(np.intp), h)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    top = padded[y0, x0] * (1 - fx) + padded[y0, x0 + 1] * fx
    bot = padded[y0 + 1, x0] * (1 - fx) + padded[y0 + 1, x0 + 1] * fx
    out = top * (1 - fy) + bot * fy
    outside = (sx <= -1.0) | (sx >= w) | (sy <= -1.0) | (sy >= h)
    out[outside] = fill
    return out


def apply_transform(img: ImageU8, t: TransformSpec) -> ImageU8:
    sx, sy = _inverse_map(t, img.width, img.height)
    out = sample_with_fill(img.pixels.astype(np.float64), sx, sy)
    return ImageU8(round_u8(out))


def augment_class(images, entry: ClassPlan) -> list[ImageU8]:
    """Originals first, then one transformed copy per planned replica."""
    images = list(images)
    if len(images) != entry.source_count:
        raise CountMismatch(
            f"class {entry.name!r}: plan expects {entry.source_count} images, got {len(images)}"
        )
    out = list(images)
    out.extend(apply_transform(images[src], t) for src, t in entry.replicas)
    return out
