"""Gradient-orientation densities over a patch and their descriptor form.

The core quantity is a kernel-weighted density of gradient orientation,
evaluated per spatial cell: each pixel contributes its gradient magnitude,
spread over orientation bins by an angular kernel and over cell centers by a
truncated Gaussian. Left unnormalized the density is homogeneous of degree 1
in image contrast; normalized per cell it is a proper conditional
distribution over orientation and is contrast-insensitive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .image import GradientField, angular_kernel

__all__ = [
    "DescriptorParams",
    "OrientationDensity",
    "DescriptorVector",
    "density_at",
    "orientation_density",
    "normalize_density",
    "sample_descriptor",
    "pack_descriptor",
    "unpack_descriptor",
    "descriptor_to_json",
    "descriptor_from_json",
]

ZERO_MASS_EPS = 1e-12
METHODS = ("sv", "mv", "r")


@dataclass(frozen=True)
class DescriptorParams:
    """Patch geometry and kernel widths for orientation densities.

    ``eps`` defaults to one bin width, ``sigma`` to an eighth of the patch
    side (a two-sigma spatial support of half a patch per cell).
    """

    patch_size: int
    bins: int = 16
    cells: int = 4
    eps: float = None
    sigma: float = None
    kernel: str = "triangular"

    def __post_init__(self):
        if self.patch_size < 3:
            raise ValueError("patch_size must be at least 3")
        if self.bins < 2:
            raise ValueError("need at least 2 orientation bins")
        if not 1 <= self.cells <= self.patch_size:
            raise ValueError("cells per side must be in 1..patch_size")
        if self.eps is None:
            object.__setattr__(self, "eps", 2.0 * np.pi / self.bins)
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.patch_size / 8.0)
        if not 0.0 < self.eps < np.pi:
            raise ValueError("eps must lie in (0, pi)")
        if not 0.0 < self.sigma < self.patch_size:
            raise ValueError("sigma must lie in (0, patch_size)")
        if self.kernel not in ("triangular", "wrapped-gaussian"):
            raise ValueError(f"unknown kernel: {self.kernel!r}")

    def bin_centers(self) -> np.ndarray:
        """Orientation bin centers (b + 0.5) * 2*pi / bins."""
        return (np.arange(self.bins) + 0.5) * (2.0 * np.pi / self.bins)

    def cell_centers(self, origin=(0, 0)) -> np.ndarray:
        """Cell centers as a (cells*cells, 2) array of (x, y), row-major.

        A patch anchored at ``origin`` spans pixel centers origin ..
        origin + patch_size - 1; the continuous footprint is split into a
        cells x cells grid and each cell contributes its midpoint.
        """
        step = self.patch_size / self.cells
        c = (np.arange(self.cells) + 0.5) * step - 0.5
        cx, cy = np.meshgrid(origin[0] + c, origin[1] + c)
        return np.stack([cx.ravel(), cy.ravel()], axis=1)

    def to_config(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "bins": self.bins,
            "cells": self.cells,
            "eps": self.eps,
            "sigma": self.sigma,
            "kernel": self.kernel,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "DescriptorParams":
        return cls(**cfg)


@dataclass
class OrientationDensity:
    """Orientation density on a cells x cells grid, ``grid[row, col, bin]``.

    ``zero_mass`` marks cells whose total mass vanished before
    normalization; those are replaced by the uniform distribution.
    """

    grid: np.ndarray
    params: DescriptorParams
    normalized: bool = False
    zero_mass: np.ndarray = None

    def __post_init__(self):
        expect = (self.params.cells, self.params.cells, self.params.bins)
        if self.grid.shape != expect:
            raise ValueError(f"grid shape {self.grid.shape}, expected {expect}")
        if np.any(self.grid < 0.0) or not np.all(np.isfinite(self.grid)):
            raise ValueError("density values must be finite and nonnegative")

    def cell_mass(self) -> np.ndarray:
        return self.grid.sum(axis=2)

    def copy(self) -> "OrientationDensity":
        zm = None if self.zero_mass is None else self.zero_mass.copy()
        return OrientationDensity(self.grid.copy(), self.params, self.normalized, zm)


def density_at(grad: GradientField, params: DescriptorParams,
               centers: np.ndarray, origin=(0, 0)) -> np.ndarray:
    """Evaluate the unnormalized orientation density at arbitrary centers.

    Sums over the patch window anchored at integer ``origin`` (clipped to the
    image), weighting each pixel's gradient magnitude by an angular kernel
    around each bin center and a spatial Gaussian around each query center.
    The Gaussian is cut off hard at three sigma. Returns (len(centers), bins).
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    ox, oy = int(round(origin[0])), int(round(origin[1]))
    p = params.patch_size
    h, w = grad.shape
    x0, x1 = max(ox, 0), min(ox + p, w)
    y0, y1 = max(oy, 0), min(oy + p, h)
    out = np.zeros((centers.shape[0], params.bins))
    if x0 >= x1 or y0 >= y1:
        return out
    mag = grad.magnitude[y0:y1, x0:x1].ravel()
    ang = grad.angle[y0:y1, x0:x1].ravel()
    px, py = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                         np.arange(y0, y1, dtype=np.float64))
    pix = np.stack([px.ravel(), py.ravel()], axis=1)

    aw = angular_kernel(ang[:, None], params.bin_centers()[None, :],
                        params.eps, params.kernel)
    aw *= mag[:, None]

    diff = centers[:, None, :] - pix[None, :, :]
    r2 = np.einsum("nmk,nmk->nm", diff, diff)
    sw = np.exp(-r2 / (2.0 * params.sigma ** 2))
    sw[r2 > (3.0 * params.sigma) ** 2] = 0.0
    return sw @ aw


def orientation_density(grad: GradientField, params: DescriptorParams,
                        origin=(0, 0)) -> OrientationDensity:
    """Unnormalized orientation density on the default cell grid."""
    vals = density_at(grad, params, params.cell_centers(origin), origin)
    grid = vals.reshape(params.cells, params.cells, params.bins)
    return OrientationDensity(grid, params, normalized=False)


def normalize_density(density: OrientationDensity) -> OrientationDensity:
    """Normalize each cell to a unit-mass distribution over orientation.

    Cells with (numerically) zero mass carry no orientation evidence; they
    become uniform and are flagged in ``zero_mass``.
    """
    mass = density.cell_mass()
    zero = mass < ZERO_MASS_EPS
    safe = np.where(zero, 1.0, mass)
    grid = density.grid / safe[:, :, None]
    grid[zero] = 1.0 / density.params.bins
    return OrientationDensity(grid, density.params, normalized=True, zero_mass=zero)


@dataclass
class DescriptorVector:
    """Flattened descriptor: cell-major (row, col), then orientation bin."""

    values: np.ndarray
    method: str
    params: DescriptorParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        expect = self.params.cells ** 2 * self.params.bins
        if self.values.size != expect:
            raise ValueError(f"descriptor has {self.values.size} values, expected {expect}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("descriptor values must be finite")

    @property
    def bins(self) -> int:
        return self.params.bins

    @property
    def n_cells(self) -> int:
        return self.params.cells ** 2

    def cell_view(self) -> np.ndarray:
        """(n_cells, bins) view of the flattened values."""
        return self.values.reshape(self.n_cells, self.bins)


def sample_descriptor(density: OrientationDensity, method: str) -> DescriptorVector:
    """Flatten a density grid into a descriptor vector (C order)."""
    return DescriptorVector(density.grid.reshape(-1).copy(), method, density.params)


# ---------------------------------------------------------------------------
# serialization: compact binary record and a JSON debug form

RECORD_MAGIC = b"ODSC"
RECORD_VERSION = 1
_METHOD_CODE = {"sv": 0, "mv": 1, "r": 2}
_CODE_METHOD = {v: k for k, v in _METHOD_CODE.items()}
_KERNEL_CODE = {"triangular": 0, "wrapped-gaussian": 1}
_CODE_KERNEL = {v: k for k, v in _KERNEL_CODE.items()}
# magic, version, method, kernel, bins, cells, patch, eps, sigma, count
_RECORD_HEADER = struct.Struct("<4sBBBxHHHddI")


def pack_descriptor(vec: DescriptorVector) -> bytes:
    """Serialize one descriptor to bytes (values stored as float32, LE)."""
    p = vec.params
    head = _RECORD_HEADER.pack(
        RECORD_MAGIC, RECORD_VERSION, _METHOD_CODE[vec.method],
        _KERNEL_CODE[p.kernel], p.bins, p.cells, p.patch_size,
        p.eps, p.sigma, vec.values.size,
    )
    return head + vec.values.astype("<f4").tobytes()


def unpack_descriptor(buf: bytes, offset: int = 0) -> tuple[DescriptorVector, int]:
    """Parse one packed descriptor; returns (vector, offset past the record)."""
    magic, ver, mcode, kcode, bins, cells, patch, eps, sigma, count = \
        _RECORD_HEADER.unpack_from(buf, offset)
    if magic != RECORD_MAGIC:
        raise ValueError("bad descriptor record magic")
    if ver != RECORD_VERSION:
        raise ValueError(f"unsupported descriptor record version {ver}")
    offset += _RECORD_HEADER.size
    vals = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    offset += 4 * count
    params = DescriptorParams(patch, bins, cells, eps, sigma, _CODE_KERNEL[kcode])
    return DescriptorVector(vals.astype(np.float64), _CODE_METHOD[mcode], params), offset


def descriptor_to_json(vec: DescriptorVector) -> dict:
    return {
        "method": vec.method,
        "params": vec.params.to_config(),
        "values": vec.values.tolist(),
    }


def descriptor_from_json(d: dict) -> DescriptorVector:
    return DescriptorVector(np.asarray(d["values"], dtype=np.float64),
                            d["method"], DescriptorParams.from_config(d["params"]))
