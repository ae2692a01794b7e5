"""Synthetic textured scenes with exact depth and correspondence ground truth.

A scene is a textured surface (a plane, or a smooth heightfield that decays
to the plane outside its bump region) posed in world coordinates. Rendering
casts one ray per pixel and stores ray depth: Euclidean distance from the
camera center along the unit ray, so a 3-D point is depth times ray
direction. Because every quantity is computed, correspondence between any
two views of the same scene is available exactly, including whether the
target point is occluded.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PinholeCamera, Pose, look_at
from .image import AffineContrast, GrayImage, read_pgm, write_pgm

__all__ = [
    "RenderError",
    "PlaneSurface",
    "HeightfieldSurface",
    "SceneModel",
    "RenderedView",
    "Correspondence",
    "render_view",
    "ground_truth_correspondence",
    "make_texture",
    "build_scene",
    "default_scene_spec",
    "generate_dataset",
    "load_dataset",
    "SceneDataset",
    "write_depth",
    "read_depth",
    "VISIBLE",
    "OCCLUDED",
    "OUT_OF_VIEW",
    "UNDEFINED",
]

VISIBLE = "visible"
OCCLUDED = "occluded"
OUT_OF_VIEW = "out_of_view"
UNDEFINED = "undefined"

OCCLUSION_REL_TOL = 0.01  # relative depth slack before a point counts as hidden
_TMIN = 1e-6
_MARCH_STEPS = 48
_BISECT_ITERS = 40


class RenderError(RuntimeError):
    """Raised when a view sees (almost) none of the scene."""


# ---------------------------------------------------------------------------
# surfaces, defined in the scene's local frame


class PlaneSurface:
    """The plane z = 0, extended indefinitely."""

    kind = "plane"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Ray parameter t of the first hit per ray, inf where none."""
        oz = origins[..., 2]
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(dz) > 1e-12, -oz / dz, np.inf)
        return np.where(t > _TMIN, t, np.inf)


class HeightfieldSurface:
    """Smooth bump field z = f(x, y), flattening to z = 0 away from center.

    ``f`` interpolates a lattice of control heights with the Catmull-Rom
    bicubic kernel. The two outermost lattice rings are zero and indices are
    clamped, so the surface continues as the plane z = 0 everywhere outside
    the lattice footprint.
    """

    kind = "heightfield"

    def __init__(self, coefficients: np.ndarray, extent: float):
        c = np.asarray(coefficients, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 6 or c.shape[1] < 6:
            raise ValueError("lattice must be 2-D, at least 6x6")
        if extent <= 0.0:
            raise ValueError("extent must be positive")
        c = c.copy()
        c[:2, :] = 0.0
        c[-2:, :] = 0.0
        c[:, :2] = 0.0
        c[:, -2:] = 0.0
        self.coefficients = c
        self.extent = float(extent)
        self.spacing = extent / (c.shape[0] - 1)
        self.x0 = -extent / 2.0
        span = float(c.max() - c.min())
        # Catmull-Rom can overshoot the control range; pad the slab bounds.
        self.zmin = float(c.min()) - 0.35 * span - 1e-6
        self.zmax = float(c.max()) + 0.35 * span + 1e-6

    @staticmethod
    def _weights(u: np.ndarray) -> tuple[np.ndarray, ...]:
        u2 = u * u
        u3 = u2 * u
        return (
            -0.5 * u3 + u2 - 0.5 * u,
            1.5 * u3 - 2.5 * u2 + 1.0,
            -1.5 * u3 + 2.0 * u2 + 0.5 * u,
            0.5 * u3 - 0.5 * u2,
        )

    def height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """f(x, y), vectorized over same-shaped coordinate arrays."""
        c = self.coefficients
        n = c.shape[0]
        u = (np.asarray(x, dtype=np.float64) - self.x0) / self.spacing
        v = (np.asarray(y, dtype=np.float64) - self.x0) / self.spacing
        iu = np.floor(u).astype(np.intp)
        iv = np.floor(v).astype(np.intp)
        fu = u - iu
        fv = v - iv
        # clamp fractional position along with the index outside the lattice
        fu = np.where(iu < 0, 0.0, np.where(iu > n - 2, 1.0, fu))
        fv = np.where(iv < 0, 0.0, np.where(iv > n - 2, 1.0, fv))
        iu = np.clip(iu, 0, n - 2)
        iv = np.clip(iv, 0, n - 2)
        wu = self._weights(fu)
        wv = self._weights(fv)
        out = np.zeros(np.broadcast(u, v).shape)
        for j in range(4):
            rows = np.clip(iv + j - 1, 0, n - 1)
            acc = np.zeros_like(out)
            for i in range(4):
                cols = np.clip(iu + i - 1, 0, n - 1)
                acc += wu[i] * c[rows, cols]
            out += wv[j] * acc
        return out

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """First surface hit per ray by slab-bounded marching plus bisection."""
        o = origins.reshape(-1, 3)
        d = dirs.reshape(-1, 3)
        t_out = np.full(o.shape[0], np.inf)

        dz = d[:, 2]
        oz = o[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (self.zmin - oz) / dz
            tb = (self.zmax - oz) / dz
        enter = np.minimum(ta, tb)
        exit_ = np.maximum(ta, tb)
        level = np.abs(dz) <= 1e-12
        inside = (oz >= self.zmin) & (oz <= self.zmax)
        enter[level] = _TMIN
        exit_[level] = np.where(inside[level], 1e4, -1.0)
        enter = np.maximum(enter, _TMIN)
        ok = exit_ > enter
        if not np.any(ok):
            return t_out.reshape(origins.shape[:-1])

        ow, dw = o[ok], d[ok]
        lo, hi = enter[ok], exit_[ok]

        def residual(t):
            p = ow + t[:, None] * dw
            return p[:, 2] - self.height(p[:, 0], p[:, 1])

        steps = np.linspace(0.0, 1.0, _MARCH_STEPS + 1)
        ts = lo[:, None] + (hi - lo)[:, None] * steps[None, :]
        g = np.empty_like(ts)
        for k in range(ts.shape[1]):
            g[:, k] = residual(ts[:, k])
        crossing = (g[:, :-1] > 0.0) & (g[:, 1:] <= 0.0)
        has = crossing.any(axis=1)
        first = np.argmax(crossing, axis=1)

        idx = np.nonzero(has)[0]
        ow, dw = ow[idx], dw[idx]
        a = ts[idx, first[idx]]
        b = ts[idx, first[idx] + 1]

        def resid_sub(t):
            p = ow + t[:, None] * dw
            return p[:, 2] - self.height(p[:, 0], p[:, 1])

        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (a + b)
            pos = resid_sub(mid) > 0.0
            a = np.where(pos, mid, a)
            b = np.where(pos, b, mid)
        hit_t = 0.5 * (a + b)

        sel = np.nonzero(ok)[0][idx]
        t_out[sel] = hit_t
        return t_out.reshape(origins.shape[:-1])


# ---------------------------------------------------------------------------
# textures


def _upsample_bilinear(grid: np.ndarray, size: int) -> np.ndarray:
    n = grid.shape[0] - 1
    c = np.arange(size) * (n / size)
    i = np.minimum(c.astype(np.intp), n - 1)
    f = c - i
    top = grid[i][:, i] * (1 - f)[None, :] + grid[i][:, i + 1] * f[None, :]
    bot = grid[i + 1][:, i] * (1 - f)[None, :] + grid[i + 1][:, i + 1] * f[None, :]
    rows = top * (1 - f)[:, None] + bot * f[:, None]
    return rows


def make_texture(rng: np.random.Generator, size: int = 256,
                 octaves: int = 5) -> np.ndarray:
    """Multi-octave value-noise albedo in [0.02, 0.98], (size, size).

    Smooth low frequencies carry shading-like variation; a small amount of
    per-texel grain at the end keeps corners and gradients plentiful.
    """
    acc = np.zeros((size, size))
    amp = 1.0
    total = 0.0
    for o in range(octaves):
        n = min(4 * 2 ** o, size)
        grid = rng.random((n + 1, n + 1))
        acc += amp * _upsample_bilinear(grid, size)
        total += amp
        amp *= 0.55
    acc /= total
    acc += 0.05 * (rng.random((size, size)) - 0.5)
    lo, hi = acc.min(), acc.max()
    return 0.02 + 0.96 * (acc - lo) / (hi - lo)


def _bilinear_wrap(tex: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample tex[y, x] with bilinear kernel, tiling the texture as a torus."""
    n = tex.shape[0]
    x = np.mod(x, n)
    y = np.mod(y, n)
    x0 = np.floor(x).astype(np.intp) % n
    y0 = np.floor(y).astype(np.intp) % n
    x1 = (x0 + 1) % n
    y1 = (y0 + 1) % n
    fx = x - np.floor(x)
    fy = y - np.floor(y)
    return (tex[y0, x0] * (1 - fx) * (1 - fy) + tex[y0, x1] * fx * (1 - fy)
            + tex[y1, x0] * (1 - fx) * fy + tex[y1, x1] * fx * fy)


# ---------------------------------------------------------------------------
# scene assembly and rendering


@dataclass
class SceneModel:
    """A textured surface posed in the world.

    ``placement`` maps scene-local points into world coordinates; the albedo
    texture is pinned to the local (x, y) plane at ``texels_per_meter``.
    """

    surface: object
    texture: np.ndarray
    texels_per_meter: float
    placement: Pose

    def local_rays(self, camera: PinholeCamera, pose: Pose):
        """Per-pixel ray origin (one point) and unit directions, local frame."""
        dirs_cam = camera.ray_directions(camera.pixel_grid())
        dirs_world = dirs_cam @ pose.r  # row-vector form of R^T d
        center_world = pose.center
        rp = self.placement.r
        origin_local = rp.T @ (center_world - self.placement.t)
        dirs_local = dirs_world @ rp
        return origin_local, dirs_local

    def albedo(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Surface intensity at local coordinates (x, y)."""
        return _bilinear_wrap(self.texture, x * self.texels_per_meter,
                              y * self.texels_per_meter)


@dataclass
class RenderedView:
    """One rendered (or loaded) view: image, ray-depth map, and its pose."""

    image: GrayImage
    depth: np.ndarray
    camera: PinholeCamera
    pose: Pose
    photometric: dict = None

    def __post_init__(self):
        if self.depth.shape != (self.camera.height, self.camera.width):
            raise ValueError("depth map does not match camera resolution")


def render_view(scene: SceneModel, camera: PinholeCamera, pose: Pose,
                photometric: dict = None, rng: np.random.Generator = None,
                min_hit_fraction: float = 0.5) -> RenderedView:
    """Ray-cast one view of the scene.

    ``photometric`` may carry ``a``/``b`` (affine contrast applied to the
    albedo) and ``noise_sigma`` (additive Gaussian, needs ``rng``); the image
    is clipped to [0, 1] and quantized to 8 bits, so views rendered in memory
    and views reloaded from disk are identical. Depth keeps full precision
    in memory (float32 on disk) and is inf where the ray misses.
    """
    origin_local, dirs_local = scene.local_rays(camera, pose)
    origins = np.broadcast_to(origin_local, dirs_local.shape)
    t = scene.surface.intersect(origins, dirs_local)
    hit = np.isfinite(t)
    if hit.mean() < min_hit_fraction:
        raise RenderError(
            f"view sees only {hit.mean():.0%} of the scene; camera likely "
            "points away from the surface")

    tt = np.where(hit, t, 0.0)
    pts = origins + tt[..., None] * dirs_local
    img = np.where(hit, scene.albedo(pts[..., 0], pts[..., 1]), 0.0)

    photometric = dict(photometric or {})
    a = float(photometric.get("a", 1.0))
    b = float(photometric.get("b", 0.0))
    sigma = float(photometric.get("noise_sigma", 0.0))
    img = AffineContrast(a, b).apply(img) if (a != 1.0 or b != 0.0) else img
    if sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma needs an rng")
        img = img + sigma * rng.standard_normal(img.shape)
    img = np.clip(img, 0.0, 1.0)

    image = GrayImage.from_u8(GrayImage(img).to_u8())
    depth = np.where(hit, t, np.inf)
    return RenderedView(image, depth, camera, pose, photometric)


# ---------------------------------------------------------------------------
# ground-truth correspondence


@dataclass
class Correspondence:
    """Where a pixel of one view lands in another view, and its status."""

    xy: np.ndarray
    status: str
    depth_source: float = np.nan
    depth_target: float = np.nan


def _interp_depth(depth: np.ndarray, x: float, y: float,
                  max_rel_spread: float = OCCLUSION_REL_TOL):
    """Bilinear ray depth, or None where no reliable value exists.

    Only raster samples with nonzero interpolation weight participate, so
    integer positions read the raster exactly. Fractional positions whose
    participating samples are non-finite or spread wider than
    ``max_rel_spread`` (a depth discontinuity, e.g. a self-occlusion
    silhouette) have no meaningful interpolant and return None.
    """
    h, w = depth.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return None
    x0 = min(int(math.floor(x)), w - 2)
    y0 = min(int(math.floor(y)), h - 2)
    fx, fy = x - x0, y - y0
    wts = np.array([[(1 - fx) * (1 - fy), fx * (1 - fy)],
                    [(1 - fx) * fy, fx * fy]])
    quad = depth[y0:y0 + 2, x0:x0 + 2]
    used = wts > 1e-12
    vals = quad[used]
    if not np.all(np.isfinite(vals)):
        return None
    lo = float(vals.min())
    if float(vals.max()) - lo > max_rel_spread * lo:
        return None
    return float(np.sum(wts[used] * quad[used]))


def ground_truth_correspondence(src: RenderedView, dst: RenderedView,
                                xy) -> Correspondence:
    """Map a source-view pixel to the target view through the 3-D surface.

    The source pixel is lifted to 3-D with interpolated ray depth, moved to
    the target camera, and projected. Status is ``visible`` when the target
    view's own depth at the landing point agrees with the transferred point
    (within a relative tolerance), ``occluded`` when the target surface lies
    in front of it or its depth there is too unreliable to certify
    visibility, ``out_of_view`` when the projection leaves the image or
    lands behind the camera, and ``undefined`` when the source depth itself
    gives no reliable lift.
    """
    x, y = float(xy[0]), float(xy[1])
    z = _interp_depth(src.depth, x, y)
    if z is None:
        return Correspondence(np.full(2, np.nan), UNDEFINED)

    d = src.camera.ray_directions(np.array([x, y]))
    pt_src = z * d
    pt_world = src.pose.inverse().transform(pt_src)
    pt_dst = dst.pose.transform(pt_world)
    if pt_dst[2] <= 0.0:
        return Correspondence(np.full(2, np.nan), OUT_OF_VIEW, depth_source=z)

    uv = dst.camera.project(pt_dst[None, :])[0]
    expected = float(np.linalg.norm(pt_dst))
    surf = _interp_depth(dst.depth, uv[0], uv[1])
    if surf is None:
        status = OUT_OF_VIEW if not dst.camera.contains(uv) else OCCLUDED
        return Correspondence(uv, status, depth_source=z, depth_target=expected)
    if expected > surf * (1.0 + OCCLUSION_REL_TOL):
        return Correspondence(uv, OCCLUDED, depth_source=z, depth_target=expected)
    return Correspondence(uv, VISIBLE, depth_source=z, depth_target=expected)


# ---------------------------------------------------------------------------
# depth raster I/O: 16-byte header (magic, width, height), float32 LE pixels

_DEPTH_MAGIC = b"DEPTHF32"
_DEPTH_HEADER = struct.Struct("<8sII")


def write_depth(path, depth: np.ndarray) -> None:
    h, w = depth.shape
    head = _DEPTH_HEADER.pack(_DEPTH_MAGIC, w, h)
    Path(path).write_bytes(head + depth.astype("<f4").tobytes())


def read_depth(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, w, h = _DEPTH_HEADER.unpack_from(buf, 0)
    if magic != _DEPTH_MAGIC:
        raise ValueError("not a depth raster file")
    vals = np.frombuffer(buf, dtype="<f4", count=w * h, offset=_DEPTH_HEADER.size)
    return vals.astype(np.float64).reshape(h, w)


# ---------------------------------------------------------------------------
# dataset generation: one scene, a closed training orbit, offset test views


def default_scene_spec(name: str = "scene", kind: str = "plane",
                       seed: int = 0) -> dict:
    """Fully populated scene description; every field may be overridden."""
    return {
        "name": name,
        "kind": kind,
        "seed": int(seed),
        "n_frames": 30,
        "resolution": [160, 120],
        "focal": 170.0,
        "distance": 1.6,
        "elevation_deg": 65.0,
        "orbit_azimuth_amp_deg": 45.0,
        "orbit_elevation_amp_deg": 3.0,
        "orbit_distance_amp": 0.08,
        "test_azimuths_deg": [0.0, 20.0, -20.0, 35.0, -35.0, 10.0],
        "test_elevations_deg": [46.0, 44.0, 46.5, 45.0, 44.5, 46.0],
        "test_distance_scale": [1.0, 1.05, 0.95, 1.1, 1.0, 1.05],
        "min_test_offset_deg": 15.0,
        "texture_size": 256,
        "texture_octaves": 5,
        "texels_per_meter": 96.0,
        "heightfield_grid": 12,
        "heightfield_amplitude": 0.12,
        "extent": 2.5,
        "contrast_a_range": [0.85, 1.1],
        "contrast_b_range": [-0.04, 0.04],
        "noise_sigma": 0.005,
    }


def _spec_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *tags)))


def build_scene(spec: dict) -> SceneModel:
    """Construct the surface and texture a spec describes (deterministic)."""
    seed = int(spec["seed"])
    tex = make_texture(_spec_rng(seed, 0), spec["texture_size"],
                       spec["texture_octaves"])
    if spec["kind"] == "plane":
        surface = PlaneSurface()
    elif spec["kind"] == "heightfield":
        g = spec["heightfield_grid"]
        amp = spec["heightfield_amplitude"]
        coefs = (_spec_rng(seed, 1).random((g, g)) - 0.5) * 2.0 * amp
        surface = HeightfieldSurface(coefs, spec["extent"])
    else:
        raise ValueError(f"unknown surface kind {spec['kind']!r}")
    return SceneModel(surface, tex, spec["texels_per_meter"], Pose.identity())


def _spherical_eye(distance: float, azimuth: float, elevation: float) -> np.ndarray:
    return distance * np.array([
        math.cos(elevation) * math.cos(azimuth),
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
    ])


def orbit_poses(spec: dict) -> list[Pose]:
    """Closed training trajectory: smooth azimuth/elevation/distance sway."""
    n = spec["n_frames"]
    el0 = math.radians(spec["elevation_deg"])
    poses = []
    for k in range(n):
        ph = 2.0 * math.pi * k / n
        az = math.radians(spec["orbit_azimuth_amp_deg"]) * math.sin(ph)
        el = el0 + math.radians(spec["orbit_elevation_amp_deg"]) * math.cos(ph)
        d = spec["distance"] * (1.0 + spec["orbit_distance_amp"] * math.cos(ph))
        poses.append(look_at(_spherical_eye(d, az, el), np.zeros(3)))
    return poses


def test_poses(spec: dict) -> list[Pose]:
    """Held-out viewpoints, each offset from every training viewpoint."""
    poses = []
    for az_d, el_d, ds in zip(spec["test_azimuths_deg"],
                              spec["test_elevations_deg"],
                              spec["test_distance_scale"]):
        eye = _spherical_eye(spec["distance"] * ds, math.radians(az_d),
                             math.radians(el_d))
        poses.append(look_at(eye, np.zeros(3)))

    min_off = math.radians(spec["min_test_offset_deg"])
    train_dirs = np.array([p.center / np.linalg.norm(p.center)
                           for p in orbit_poses(spec)])
    for i, p in enumerate(poses):
        d = p.center / np.linalg.norm(p.center)
        worst = float(np.max(train_dirs @ d))
        if worst > math.cos(min_off):
            raise ValueError(
                f"test view {i} is only {math.degrees(math.acos(worst)):.1f} deg "
                f"from the training orbit (need {spec['min_test_offset_deg']})")
    return poses


def _camera(spec: dict) -> PinholeCamera:
    w, h = spec["resolution"]
    return PinholeCamera(spec["focal"], (w - 1) / 2.0, (h - 1) / 2.0, w, h)


def _draw_photometric(spec: dict, rng: np.random.Generator) -> dict:
    a0, a1 = spec["contrast_a_range"]
    b0, b1 = spec["contrast_b_range"]
    return {
        "a": float(rng.uniform(a0, a1)),
        "b": float(rng.uniform(b0, b1)),
        "noise_sigma": float(spec["noise_sigma"]),
    }


def generate_dataset(spec: dict, out_dir) -> "SceneDataset":
    """Render a full scene dataset to disk and return it.

    Writes 8-bit PGM images, float32 depth rasters, and a JSON manifest.
    Everything is derived from ``spec`` (including its seed), so the same
    spec regenerates byte-identical files.
    """
    spec = {**default_scene_spec(), **spec}
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "tests").mkdir(parents=True, exist_ok=True)

    scene = build_scene(spec)
    cam = _camera(spec)
    seed = int(spec["seed"])

    frames, tests = [], []
    manifest_frames, manifest_tests = [], []
    for role, poses, store, records, tag in (
        ("frame", orbit_poses(spec), frames, manifest_frames, 2),
        ("test", test_poses(spec), tests, manifest_tests, 3),
    ):
        for i, pose in enumerate(poses):
            photo = _draw_photometric(spec, _spec_rng(seed, tag, i, 0))
            view = render_view(scene, cam, pose, photo,
                               rng=_spec_rng(seed, tag, i, 1))
            rel_img = f"{role}s/{role}_{i:03d}.pgm"
            rel_depth = f"{role}s/{role}_{i:03d}.depth"
            write_pgm(view.image, out / rel_img)
            write_depth(out / rel_depth, view.depth)
            store.append(view)
            records.append({
                "image": rel_img,
                "depth": rel_depth,
                "pose": pose.to_config(),
                "photometric": photo,
            })

    manifest = {
        "format_version": 1,
        "spec": spec,
        "camera": cam.to_config(),
        "frames": manifest_frames,
        "tests": manifest_tests,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return SceneDataset(spec, cam, frames, tests, manifest)


@dataclass
class SceneDataset:
    """A generated scene: training frames, held-out test views, manifest."""

    spec: dict
    camera: PinholeCamera
    frames: list
    tests: list
    manifest: dict

    @property
    def name(self) -> str:
        return self.spec["name"]


def load_dataset(path) -> SceneDataset:
    """Read back a dataset written by :func:`generate_dataset`.

    Images roundtrip exactly (they are quantized before writing); depth comes
    back float32-rounded, adequate for correspondence at far better than a
    tenth of a pixel.
    """
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    cam = PinholeCamera.from_config(manifest["camera"])

    def load_views(records):
        views = []
        for rec in records:
            views.append(RenderedView(
                read_pgm(root / rec["image"]),
                read_depth(root / rec["depth"]),
                cam, Pose.from_config(rec["pose"]),
                rec.get("photometric"),
            ))
        return views

    return SceneDataset(manifest["spec"], cam, load_views(manifest["frames"]),
                        load_views(manifest["tests"]), manifest)
