"""Descriptors from synthesized viewpoints of a reconstructed local surface.

When ground-truth depth is available, the patch under a tracked point can be
lifted to a small 3-D surface, rotated about its anchor, and reprojected
into the source image to fabricate how the patch would look from vantage
points the camera never visited. Aggregating orientation densities over a
grid of such rotations approximates marginalizing the viewpoint; keeping
the per-view descriptors instead and scoring a query by its best match
(max-out) trades memory for selectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PinholeCamera, axis_angle_rotation, rot_z
from .hog import (DescriptorParams, DescriptorVector, OrientationDensity,
                  normalize_density, orientation_density, sample_descriptor)
from .image import GrayImage, bilinear_sample, compute_gradient, level_to_base, base_to_level

__all__ = [
    "ReprojectionOutOfBounds",
    "LocalSurface",
    "sample_rotations",
    "synthesize_patch",
    "view_visible",
    "synthesize_views",
    "patch_density",
    "view_descriptors",
    "aggregate_descriptor",
    "maxout_residual",
    "select_keyframes",
]

N_AZIMUTH = 8
N_INPLANE = 10
TILT_ANGLE = np.pi / 6
INPLANE_HALFWIDTH = np.pi / 3
MIN_FACING = 0.2
BOUNDS_MARGIN = 0.2
DEFAULT_KEYFRAMES = 10


class ReprojectionOutOfBounds(ValueError):
    """A synthesized view would sample far outside the source image."""


def sample_rotations(n_azimuth: int = N_AZIMUTH, n_inplane: int = N_INPLANE,
                     tilt: float = TILT_ANGLE,
                     inplane_halfwidth: float = INPLANE_HALFWIDTH) -> np.ndarray:
    """Rotation grid over a viewing hemisphere, (n_azimuth*n_inplane, 3, 3).

    Out-of-plane factor: the untilted pole plus ``n_azimuth - 1`` tilts of
    ``tilt`` radians about evenly spaced axes in the camera's image plane.
    In-plane factor: ``n_inplane`` rotations about the optical axis stepped
    across ``[-inplane_halfwidth, inplane_halfwidth)``, always including 0.
    The identity is therefore always on the grid. Defaults give 80 views.
    """
    if n_azimuth < 1 or n_inplane < 1:
        raise ValueError("need at least one azimuth and one in-plane angle")
    oop = [np.eye(3)]
    for j in range(n_azimuth - 1):
        phi = 2.0 * np.pi * j / (n_azimuth - 1)
        axis = np.array([-np.sin(phi), np.cos(phi), 0.0])
        oop.append(axis_angle_rotation(axis, tilt))
    step = 2.0 * inplane_halfwidth / n_inplane
    inplane = [rot_z((k - n_inplane // 2) * step) for k in range(n_inplane)]
    return np.array([a @ b for a in oop for b in inplane])


@dataclass
class LocalSurface:
    """Patch-sized surface reconstruction in the source camera's frame.

    ``points[r, c]`` is the 3-D point under lattice pixel (r, c); the lattice
    is the patch-extraction grid at ``anchor_xy`` (level coordinates) on
    pyramid level ``level``. Normals point toward the camera (negative z).
    """

    points: np.ndarray
    normals: np.ndarray
    mean_normal: np.ndarray
    anchor: np.ndarray
    anchor_xy: np.ndarray
    level: int
    camera: PinholeCamera
    patch_size: int

    @classmethod
    def from_frame(cls, depth: np.ndarray, camera: PinholeCamera, anchor_xy,
                   patch_size: int, level: int = 0) -> "LocalSurface":
        """Lift the patch lattice at ``anchor_xy`` using a ray-depth map.

        Raises ValueError when the depth under any lattice point has
        incomplete (non-finite) bilinear support.
        """
        half = (patch_size - 1) / 2.0
        offs = np.arange(patch_size) - half
        ax, ay = float(anchor_xy[0]), float(anchor_xy[1])
        gx, gy = np.meshgrid(ax + offs, ay + offs)
        lattice = np.stack([gx, gy], axis=-1)
        base_xy = level_to_base(lattice, level)

        h, w = depth.shape
        x, y = base_xy[..., 0], base_xy[..., 1]
        if np.any((x < 0) | (x > w - 1) | (y < 0) | (y > h - 1)):
            raise ValueError("patch lattice leaves the depth map")
        x0 = np.minimum(np.floor(x), w - 2).astype(np.intp)
        y0 = np.minimum(np.floor(y), h - 2).astype(np.intp)
        quad = np.stack([depth[y0, x0], depth[y0, x0 + 1],
                         depth[y0 + 1, x0], depth[y0 + 1, x0 + 1]])
        if not np.all(np.isfinite(quad)):
            raise ValueError("depth has holes under the patch lattice")
        z = bilinear_sample(depth, base_xy, clamp=False)
        points = z[..., None] * camera.ray_directions(base_xy)

        anchor_base = level_to_base(np.array([ax, ay], dtype=np.float64), level)
        za = bilinear_sample(depth, anchor_base[None, :], clamp=False)[0]
        anchor = za * camera.ray_directions(anchor_base)

        normals = _lattice_normals(points)
        mean_normal = normals.reshape(-1, 3).mean(axis=0)
        mean_normal /= np.linalg.norm(mean_normal)
        return cls(points, normals, mean_normal, anchor,
                   np.array([ax, ay]), level, camera, patch_size)


def _lattice_normals(points: np.ndarray) -> np.ndarray:
    """Per-lattice-point surface normals, oriented toward the camera."""
    du = np.empty_like(points)
    dv = np.empty_like(points)
    du[:, 1:-1] = points[:, 2:] - points[:, :-2]
    du[:, 0] = points[:, 1] - points[:, 0]
    du[:, -1] = points[:, -1] - points[:, -2]
    dv[1:-1, :] = points[2:, :] - points[:-2, :]
    dv[0, :] = points[1, :] - points[0, :]
    dv[-1, :] = points[-1, :] - points[-2, :]
    n = np.cross(du, dv)
    norms = np.linalg.norm(n, axis=-1, keepdims=True)
    n = n / np.where(norms < 1e-300, 1.0, norms)
    flip = n[..., 2] > 0.0  # camera looks along +z; facing normals have z < 0
    n[flip] *= -1.0
    return n


def view_visible(surface: LocalSurface, rotation: np.ndarray,
                 min_facing: float = MIN_FACING) -> bool:
    """Whether the rotated patch still faces the camera with some margin."""
    return float(-(rotation @ surface.mean_normal)[2]) > min_facing


def synthesize_patch(surface: LocalSurface, level_image: GrayImage,
                     rotation: np.ndarray,
                     bounds_margin: float = BOUNDS_MARGIN) -> np.ndarray:
    """Appearance of the surface rotated about its anchor, on the patch lattice.

    Each lattice point's 3-D surface point is rotated about the anchor,
    reprojected, and the source level image is sampled there bilinearly
    (borders clamped). Raises :class:`ReprojectionOutOfBounds` if any sample
    would land further outside the image than ``bounds_margin`` times its
    smaller side, or behind the camera.
    """
    rotated = (surface.points - surface.anchor) @ rotation.T + surface.anchor
    if np.any(rotated[..., 2] <= 0.0):
        raise ReprojectionOutOfBounds("rotated surface reaches behind the camera")
    uv_base = surface.camera.project(rotated.reshape(-1, 3))
    uv = base_to_level(uv_base, surface.level).reshape(surface.points.shape[:2] + (2,))

    h, w = level_image.shape
    slack = bounds_margin * min(h, w)
    if (uv[..., 0].min() < -slack or uv[..., 0].max() > w - 1 + slack
            or uv[..., 1].min() < -slack or uv[..., 1].max() > h - 1 + slack):
        raise ReprojectionOutOfBounds("synthesized view samples outside the image")
    return bilinear_sample(level_image.data, uv)


def synthesize_views(surface: LocalSurface, level_image: GrayImage,
                     rotations: np.ndarray = None,
                     min_facing: float = MIN_FACING):
    """Synthesize every visible, in-bounds view; returns (stack, kept indices)."""
    if rotations is None:
        rotations = sample_rotations()
    patches, kept = [], []
    for i, r in enumerate(rotations):
        if not view_visible(surface, r, min_facing):
            continue
        try:
            patches.append(synthesize_patch(surface, level_image, r))
        except ReprojectionOutOfBounds:
            continue
        kept.append(i)
    if not patches:
        raise ValueError("no synthesized view was accepted")
    return np.array(patches), np.array(kept)


def patch_density(patch: np.ndarray, params: DescriptorParams):
    """Unnormalized orientation density of one patch array."""
    grad = compute_gradient(GrayImage(patch, unit_range=False))
    return orientation_density(grad, params)


def view_descriptors(patches: np.ndarray,
                     params: DescriptorParams) -> list[DescriptorVector]:
    """Per-view normalized descriptors, for max-out storage."""
    return [sample_descriptor(normalize_density(patch_density(p, params)), "r")
            for p in patches]


def aggregate_descriptor(patches: np.ndarray,
                         params: DescriptorParams) -> DescriptorVector:
    """Single descriptor marginalized over the synthesized views."""
    grids = np.array([patch_density(p, params).grid for p in patches])
    mean = OrientationDensity(grids.mean(axis=0), params)
    return sample_descriptor(normalize_density(mean), "r")


def maxout_residual(stored: np.ndarray, query: np.ndarray) -> float:
    """Smallest squared l2 residual between the query and any stored row."""
    stored = np.atleast_2d(stored)
    diffs = stored - np.asarray(query, dtype=np.float64)[None, :]
    return float(np.min(np.einsum("ij,ij->i", diffs, diffs)))


def select_keyframes(n_frames: int, k: int = DEFAULT_KEYFRAMES) -> np.ndarray:
    """Indices of up to k frames spread evenly across a track."""
    if n_frames < 1:
        raise ValueError("track has no frames")
    k = min(k, n_frames)
    return np.unique(np.round(np.linspace(0, n_frames - 1, k)).astype(int))
