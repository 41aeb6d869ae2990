"""Image container, raster I/O and the preprocessing chain.

The chain applied to every ECG trace is ``to_grayscale -> gamma_correct ->
resize_bilinear -> zscore``. Gamma correction uses a per-pixel gamma

    phi(X)   = pi * X / (2 * 127.5)
    gamma(X) = 1 + acos(clamp(phi(X), 0, 1))
    s(X)     = 255 * (X / 255) ** (1 / gamma(X))

``acos`` is undefined once ``phi`` exceeds 1 (X >= 82), so the argument is
clamped. The result brightens dark pixels and is the identity on [82, 255].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, UnsupportedFormat, ZeroDimension

X_MID = 127.5
ZSCORE_EPS = 1e-7

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PNM_MAGIC = (b"P5", b"P6")


@dataclass(frozen=True, eq=False)
class ImageU8:
    """8-bit raster stored as a ``(height, width, channels)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ZeroDimension("image has a zero dimension")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ImageU8):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"ImageU8(w={self.width}, h={self.height}, c={self.channels})"

    @classmethod
    def from_list(cls, width: int, height: int, channels: int, values) -> ImageU8:
        arr = np.asarray(values, dtype=np.int64)
        if arr.size != width * height * channels:
            raise ValueError("pixel count does not match width*height*channels")
        return cls(arr.reshape(height, width, channels))


def round_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255]."""
    values = np.asarray(values, dtype=np.float64)
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# I/O


def load_image(path) -> ImageU8:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_PNG_MAGIC):
        kind = "PNG"
    elif head[:2] in _PNM_MAGIC:
        kind = "PPM"
    else:
        raise UnsupportedFormat(f"{path}: only PNG and binary PGM/PPM are supported")

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise UnsupportedFormat(f"{path}: {mode} images are not 8-bit")
            if mode == "1":
                im = im.convert("L")
            elif mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            elif mode == "LA":
                im = _flatten_alpha(im.convert("RGBA")).convert("L")
            if im.mode == "RGBA":
                im = _flatten_alpha(im)
            if im.mode not in ("L", "RGB"):
                raise UnsupportedFormat(f"{path}: unsupported mode {im.mode}")
            arr = np.array(im, dtype=np.uint8)
    except UnsupportedFormat:
        raise
    except (OSError, SyntaxError, ValueError, UnidentifiedImageError) as exc:
        raise CorruptImage(f"{path}: cannot decode {kind} data ({exc})") from exc
    return ImageU8(arr)


def _flatten_alpha(im: Image.Image) -> Image.Image:
    # Printed ECG sheets have a white background; composite transparent regions onto it.
    background = Image.new("RGBA", im.size, (255, 255, 255, 255))
    return Image.alpha_composite(background, im).convert("RGB")


def save_image(img: ImageU8, path) -> Path:
    """Write ``img`` as PNG, or PGM/PPM when the suffix asks for it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    im = Image.fromarray(np.ascontiguousarray(arr), mode="L" if img.channels == 1 else "RGB")
    if suffix == ".png":
        im.save(path, format="PNG")
    elif suffix in (".pgm", ".ppm", ".pnm"):
        if suffix == ".pgm" and img.channels != 1:
            raise UnsupportedFormat("PGM output requires a single-channel image")
        im.save(path, format="PPM")
    else:
        raise UnsupportedFormat(f"cannot write {suffix!r} files")
    return path


# ---------------------------------------------------------------------------
# pixel operations


def to_grayscale(img: ImageU8) -> ImageU8:
    """Rec.601 luma, rounded half away from zero."""
    if img.channels == 1:
        return img
    rgb = img.pixels.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return ImageU8(round_u8(luma))


def gamma_value(x: float) -> float:
    phi = math.pi * x / (2.0 * X_MID)
    return 1.0 + math.acos(min(max(phi, 0.0), 1.0))


def gamma_lut() -> np.ndarray:
    """256-entry uint8 table for the adaptive gamma curve."""
    x = np.arange(256, dtype=np.float64)
    phi = np.pi * x / (2.0 * X_MID)
    gamma = 1.0 + np.arccos(np.clip(phi, 0.0, 1.0))
    s = 255.0 * (x / 255.0) ** (1.0 / gamma)
    return round_u8(s)


_LUT = gamma_lut()
_LUT.setflags(write=False)


def gamma_correct(img: ImageU8) -> ImageU8:
    return ImageU8(_LUT[img.pixels])


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel-centre alignment, clamped at the borders.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_plane(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a float ``(H, W)`` or ``(H, W, C)`` array, no rounding."""
    if out_h <= 0 or out_w <= 0:
        raise ZeroDimension(f"target size {out_w}x{out_h} is not positive")
    plane = np.asarray(plane, dtype=np.float64)
    y0, y1, fy = _axis_coords(plane.shape[0], out_h)
    x0, x1, fx = _axis_coords(plane.shape[1], out_w)
    if plane.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = plane[y0][:, x0] * (1.0 - fx) + plane[y0][:, x1] * fx
    bottom = plane[y1][:, x0] * (1.0 - fx) + plane[y1][:, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_bilinear(img: ImageU8, out_w: int, out_h: int) -> ImageU8:
    if out_w <= 0 or out_h <= 0:
        raise ZeroDimension(f"target size {out_w}x{out_h} is not positive")
    if (out_w, out_h) == (img.width, img.height):
        return img
    return ImageU8(round_u8(resize_plane(img.pixels, out_h, out_w)))


def channel_stats(images) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std pooled over a collection of images."""
    images = list(images)
    if not images:
        raise ValueError("channel_stats needs at least one image")
    c = images[0].channels
    total = np.zeros(c)
    total_sq = np.zeros(c)
    n = 0
    for img in images:
        px = img.pixels.reshape(-1, c).astype(np.float64)
        total += px.sum(axis=0)
        total_sq += (px * px).sum(axis=0)
        n += px.shape[0]
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    return mean, np.sqrt(var)


def zscore(img: ImageU8, stats: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Normalize to zero mean / unit std per channel; returns ``(C, H, W)`` float64.

    With ``stats=None`` the mean and std come from the image itself. Passing
    ``channel_stats(...)`` of a training set gives dataset-global normalization.
    """
    x = img.pixels.astype(np.float64).transpose(2, 0, 1)
    if stats is None:
        mean = x.mean(axis=(1, 2))
        std = x.std(axis=(1, 2))
    else:
        mean, std = (np.asarray(s, dtype=np.float64).reshape(-1) for s in stats)
    out = (x - mean[:, None, None]) / np.maximum(std, ZSCORE_EPS)[:, None, None]
    if stats is None:
        # Constant channels divide an exactly-zero residual; keep them exactly zero.
        out[std <= ZSCORE_EPS] = 0.0
    return out


def preprocess(img: ImageU8, size: int | tuple[int, int], channels: int = 1) -> ImageU8:
    """Grayscale (optional) -> gamma -> resize. Normalization is applied later."""
    w, h = (size, size) if isinstance(size, int) else size
    if channels == 1:
        img = to_grayscale(img)
    elif img.channels == 1:
        img = ImageU8(np.repeat(img.pixels, 3, axis=2))
    return resize_bilinear(gamma_correct(img), w, h)
