"""Grayscale images, pyramids, gradients, kernels, and contrast transforms.

Images are row-major float64 arrays indexed ``data[y, x]`` with intensities
in [0, 1]. Positions are ``(x, y)`` pairs; pixel centers sit at integer
coordinates. Gradient orientation is the angle of the gradient vector with
the +x axis, in [0, 2*pi); +y points down the rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GrayImage",
    "ImagePyramid",
    "GradientField",
    "KernelParams",
    "AffineContrast",
    "GammaContrast",
    "TableContrast",
    "apply_contrast",
    "contrast_from_config",
    "compute_gradient",
    "build_pyramid",
    "angular_kernel",
    "circular_distance",
    "bilinear_sample",
    "level_to_base",
    "base_to_level",
    "read_pgm",
    "write_pgm",
]

MAX_PYRAMID_LEVELS = 5
TWO_PI = 2.0 * math.pi


class GrayImage:
    """Single-channel intensity image with values in [0, 1].

    Contrast transforms can push values outside the unit interval; such
    images are constructed with ``unit_range=False`` and are accepted by all
    downstream operations (gradients, pyramids, descriptors).
    """

    __slots__ = ("data",)

    def __init__(self, data, unit_range: bool = True):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D intensity data, got shape {arr.shape}")
        if arr.shape[0] < 3 or arr.shape[1] < 3:
            raise ValueError(
                f"image must be at least 3x3, got {arr.shape[1]}x{arr.shape[0]}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        if unit_range and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_u8(cls, arr: np.ndarray) -> "GrayImage":
        """Wrap an 8-bit array, normalizing intensities to [0, 1]."""
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    def to_u8(self) -> np.ndarray:
        return np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)


@dataclass
class ImagePyramid:
    """Discrete scale-space: level k is the base downsampled by 2**k."""

    levels: list

    def __post_init__(self):
        if not 1 <= len(self.levels) <= MAX_PYRAMID_LEVELS:
            raise ValueError(f"pyramid must have 1..{MAX_PYRAMID_LEVELS} levels")
        for k in range(1, len(self.levels)):
            prev, cur = self.levels[k - 1], self.levels[k]
            if cur.height != -(-prev.height // 2) or cur.width != -(-prev.width // 2):
                raise ValueError("pyramid level sizes must halve (ceil) each step")

    def __len__(self) -> int:
        return len(self.levels)

    def level(self, k: int) -> GrayImage:
        return self.levels[k]


class GradientField:
    """Per-pixel image gradient: vector, magnitude, and orientation.

    ``angle`` is undefined where the magnitude is exactly zero; ``valid``
    marks the defined pixels. The stored vector satisfies
    ``(gx, gy) = magnitude * (cos(angle), sin(angle))`` wherever valid.
    """

    __slots__ = ("gx", "gy", "magnitude", "angle", "valid")

    def __init__(self, gx: np.ndarray, gy: np.ndarray):
        gx = np.asarray(gx, dtype=np.float64)
        gy = np.asarray(gy, dtype=np.float64)
        if gx.shape != gy.shape or gx.ndim != 2:
            raise ValueError("gradient components must be matching 2-D arrays")
        self.gx = gx
        self.gy = gy
        self.magnitude = np.hypot(gx, gy)
        ang = np.mod(np.arctan2(gy, gx), TWO_PI)
        ang[ang >= TWO_PI] = 0.0  # guard rounding of tiny negative angles
        self.valid = self.magnitude > 0.0
        ang[~self.valid] = 0.0
        self.angle = ang

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape


def compute_gradient(img: GrayImage) -> GradientField:
    """Image gradient by central differences (one-sided at the borders)."""
    a = img.data
    gx = np.empty_like(a)
    gy = np.empty_like(a)
    gx[:, 1:-1] = (a[:, 2:] - a[:, :-2]) * 0.5
    gx[:, 0] = a[:, 1] - a[:, 0]
    gx[:, -1] = a[:, -1] - a[:, -2]
    gy[1:-1, :] = (a[2:, :] - a[:-2, :]) * 0.5
    gy[0, :] = a[1, :] - a[0, :]
    gy[-1, :] = a[-1, :] - a[-2, :]
    return GradientField(gx, gy)


def _box_halve(a: np.ndarray) -> np.ndarray:
    """2x2 box filter followed by 2-subsampling; partial boxes at odd edges."""
    h, w = a.shape
    sums = np.add.reduceat(np.add.reduceat(a, np.arange(0, h, 2), axis=0),
                           np.arange(0, w, 2), axis=1)
    rows = np.minimum(np.arange(0, h, 2) + 2, h) - np.arange(0, h, 2)
    cols = np.minimum(np.arange(0, w, 2) + 2, w) - np.arange(0, w, 2)
    return sums / np.outer(rows, cols)


def build_pyramid(img: GrayImage, levels: int) -> ImagePyramid:
    """Box-filtered half-resolution pyramid with ``levels`` levels (base included)."""
    if not 1 <= levels <= MAX_PYRAMID_LEVELS:
        raise ValueError(f"levels must be in 1..{MAX_PYRAMID_LEVELS}")
    need = 3 * 2 ** (levels - 1)
    if img.width < need or img.height < need:
        raise ValueError(
            f"image too small for {levels} pyramid levels: need {need} px per side"
        )
    out = [img]
    for _ in range(levels - 1):
        out.append(GrayImage(_box_halve(out[-1].data), unit_range=False))
    return ImagePyramid(out)


def level_to_base(xy, level: int):
    """Map pixel coordinates at pyramid ``level`` to base-resolution coordinates.

    A level-k pixel covers a 2**k block of base pixels; its center maps to
    the center of that block.
    """
    s = float(2 ** level)
    return np.asarray(xy, dtype=np.float64) * s + (s - 1.0) / 2.0


def base_to_level(xy, level: int):
    """Inverse of :func:`level_to_base`."""
    s = float(2 ** level)
    return (np.asarray(xy, dtype=np.float64) - (s - 1.0) / 2.0) / s


def circular_distance(a, b):
    """Distance on the circle between angles ``a`` and ``b``, in [0, pi]."""
    d = np.mod(np.asarray(a, dtype=np.float64) - b, TWO_PI)
    return np.minimum(d, TWO_PI - d)


def angular_kernel(theta, mu, eps: float, mode: str = "triangular"):
    """Angular weighting kernel on circular distance d(theta, mu).

    ``triangular`` (the default) is a peak-normalized linear-interpolation
    kernel that is 1 at d = 0 and 0 for d >= eps. ``wrapped-gaussian`` is the
    exact wrapped Gaussian with scale eps (unnormalized, peak approximately 1).
    """
    d = circular_distance(theta, mu)
    if mode == "triangular":
        return np.maximum(0.0, 1.0 - d / eps)
    if mode == "wrapped-gaussian":
        acc = np.zeros_like(d)
        for k in range(-3, 4):
            acc += np.exp(-((d + TWO_PI * k) ** 2) / (2.0 * eps * eps))
        return acc
    raise ValueError(f"unknown angular kernel mode: {mode!r}")


@dataclass(frozen=True)
class KernelParams:
    """Angular width eps (radians) and spatial width sigma (pixels)."""

    eps: float
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.eps < math.pi:
            raise ValueError("angular width eps must lie in (0, pi)")
        if self.sigma <= 0.0:
            raise ValueError("spatial width sigma must be positive")

    def check_patch(self, patch_size: int) -> None:
        """Enforce sigma < sqrt(patch area) for a square patch."""
        if self.sigma >= patch_size:
            raise ValueError("sigma must be smaller than the patch side")


# ---------------------------------------------------------------------------
# contrast transforms


class AffineContrast:
    """v -> a*v + b with a > 0. Output is not clipped."""

    kind = "affine"

    def __init__(self, a: float, b: float = 0.0):
        if a <= 0.0:
            raise ValueError("affine contrast requires a > 0 to stay monotone")
        self.a = float(a)
        self.b = float(b)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.a * values + self.b

    def to_config(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}


class GammaContrast:
    """v -> v**gamma on [0, 1] with gamma > 0. Output is not clipped."""

    kind = "gamma"

    def __init__(self, gamma: float):
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.power(np.maximum(values, 0.0), self.gamma)

    def to_config(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


class TableContrast:
    """Monotone lookup table sampled uniformly on [0, 1], linearly interpolated.

    The only contrast mode whose output is clipped to [0, 1].
    """

    kind = "table"

    def __init__(self, values):
        tab = np.asarray(values, dtype=np.float64)
        if tab.ndim != 1 or tab.size < 2:
            raise ValueError("table must be a 1-D array with at least 2 entries")
        if not np.all(np.diff(tab) > 0.0):
            raise ValueError("contrast table must be strictly increasing")
        self.values = tab
        self._xs = np.linspace(0.0, 1.0, tab.size)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.clip(np.interp(values, self._xs, self.values), 0.0, 1.0)

    def to_config(self) -> dict:
        return {"kind": self.kind, "values": self.values.tolist()}


def contrast_from_config(cfg: dict | None):
    if cfg is None:
        return None
    kind = cfg["kind"]
    if kind == "affine":
        return AffineContrast(cfg["a"], cfg["b"])
    if kind == "gamma":
        return GammaContrast(cfg["gamma"])
    if kind == "table":
        return TableContrast(cfg["values"])
    raise ValueError(f"unknown contrast kind: {kind!r}")


def apply_contrast(img: GrayImage, transform) -> GrayImage:
    """Apply a monotone range transform to an image.

    Affine and gamma outputs are returned unclipped (they may exceed [0, 1]);
    table mode clips, as the table itself is defined on the unit interval.
    """
    out = transform.apply(img.data)
    return GrayImage(out, unit_range=isinstance(transform, TableContrast))


# ---------------------------------------------------------------------------
# sampling


def bilinear_sample(data: np.ndarray, xy: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Bilinearly sample ``data[y, x]`` at float positions (..., 2).

    Coordinates are clamped to the valid interpolation domain, so border
    pixels extend outward. Pass ``clamp=False`` to require in-bounds input.
    """
    h, w = data.shape
    xy = np.asarray(xy, dtype=np.float64)
    x = xy[..., 0]
    y = xy[..., 1]
    if clamp:
        x = np.clip(x, 0.0, w - 1.0)
        y = np.clip(y, 0.0, h - 1.0)
    elif np.any((x < 0) | (x > w - 1) | (y < 0) | (y > h - 1)):
        raise ValueError("sample position outside image bounds")
    x0 = np.minimum(np.floor(x), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(y), h - 2).astype(np.intp)
    fx = x - x0
    fy = y - y0
    v00 = data[y0, x0]
    v01 = data[y0, x0 + 1]
    v10 = data[y0 + 1, x0]
    v11 = data[y0 + 1, x0 + 1]
    return (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )


# ---------------------------------------------------------------------------
# PGM I/O (binary, 8-bit)


def _read_pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(raw):
            raise ValueError("truncated PGM header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    return tokens, i + 1  # single whitespace after maxval precedes the raster


def read_pgm(path) -> GrayImage:
    """Read an 8-bit binary (P5) PGM file."""
    raw = Path(path).read_bytes()
    tokens, offset = _read_pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise ValueError("only binary (P5) PGM files are supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM files are supported")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=offset)
    return GrayImage.from_u8(pixels.reshape(h, w))


def write_pgm(img: GrayImage, path) -> None:
    """Write an image as an 8-bit binary (P5) PGM file."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.to_u8().tobytes())
