"""Local surface lifting, view synthesis, and max-out aggregation."""

import math

import numpy as np
import pytest

from mvdesc.geometry import PinholeCamera, Pose, axis_angle_rotation, rot_z
from mvdesc.hog import DescriptorParams, normalize_density
from mvdesc.image import GrayImage, bilinear_sample
from mvdesc.viewsynth import (LocalSurface, ReprojectionOutOfBounds,
                              aggregate_descriptor, maxout_residual,
                              patch_density, sample_rotations, select_keyframes,
                              synthesize_patch, synthesize_views,
                              view_descriptors, view_visible)


def overhead_camera():
    return PinholeCamera(170.0, 79.5, 59.5, 160, 120)


def flat_depth(cam, z=1.8):
    """Exact ray-depth map of the fronto-parallel plane at camera depth z."""
    dirs = cam.ray_directions(cam.pixel_grid())
    return z / dirs[..., 2]


class TestRotationGrid:
    def test_default_grid(self):
        rots = sample_rotations()
        assert rots.shape == (80, 3, 3)
        eye_rows = [i for i, r in enumerate(rots)
                    if np.allclose(r, np.eye(3), atol=1e-12)]
        assert len(eye_rows) == 1

    def test_all_entries_are_rotations(self):
        for r in sample_rotations(5, 7, tilt=0.4):
            np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(r) == pytest.approx(1.0)

    def test_tilt_angle_reached(self):
        tilt = 0.31
        rots = sample_rotations(4, 3, tilt=tilt)
        # pure out-of-plane rows pair each tilt with the 0 in-plane angle
        z_angles = [math.acos(np.clip(r[2, 2], -1, 1)) for r in rots]
        assert min(z_angles) == pytest.approx(0.0, abs=1e-12)
        assert max(z_angles) == pytest.approx(tilt)

    def test_custom_counts_and_identity_only(self):
        assert sample_rotations(3, 4).shape == (12, 3, 3)
        only = sample_rotations(1, 1)
        np.testing.assert_allclose(only[0], np.eye(3), atol=1e-15)

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            sample_rotations(0, 5)


class TestLocalSurface:
    def lift(self, plane_ds, patch=11):
        frame = plane_ds.frames[0]
        anchor = (frame.camera.width // 2, frame.camera.height // 2)
        return frame, LocalSurface.from_frame(frame.depth, frame.camera,
                                              anchor, patch)

    def test_points_lie_on_the_world_plane(self, plane_ds):
        frame, surf = self.lift(plane_ds)
        world = frame.pose.inverse().transform(surf.points.reshape(-1, 3))
        np.testing.assert_allclose(world[:, 2], 0.0, atol=1e-9)

    def test_anchor_is_the_lattice_center(self, plane_ds):
        _, surf = self.lift(plane_ds)
        np.testing.assert_allclose(surf.points[5, 5], surf.anchor, atol=1e-12)

    def test_normals_face_the_camera(self, plane_ds):
        frame, surf = self.lift(plane_ds)
        assert (surf.normals[..., 2] < 0.0).all()
        assert np.linalg.norm(surf.mean_normal) == pytest.approx(1.0)
        plane_in_cam = frame.pose.r @ np.array([0.0, 0.0, 1.0])
        np.testing.assert_allclose(surf.mean_normal, plane_in_cam, atol=1e-6)

    def test_rejects_lattice_off_the_image(self, plane_ds):
        frame = plane_ds.frames[0]
        with pytest.raises(ValueError):
            LocalSurface.from_frame(frame.depth, frame.camera, (2, 2), 11)

    def test_rejects_depth_holes(self, plane_ds):
        frame = plane_ds.frames[0]
        holed = frame.depth.copy()
        holed[60, 81] = np.inf
        with pytest.raises(ValueError):
            LocalSurface.from_frame(holed, frame.camera, (80, 60), 11)

    def test_level_lattice_lifts_base_pixels(self):
        cam = overhead_camera()
        depth = flat_depth(cam)
        surf = LocalSurface.from_frame(depth, cam, (20.0, 15.0), 5, level=1)
        base = np.array([2.0 * 20.0 + 0.5, 2.0 * 15.0 + 0.5])
        z = bilinear_sample(depth, base[None, :], clamp=False)[0]
        want = z * cam.ray_directions(base)
        np.testing.assert_allclose(surf.points[2, 2], want, atol=1e-12)
        assert surf.level == 1


class TestSynthesis:
    def setup_method(self):
        self.cam = overhead_camera()
        self.depth = flat_depth(self.cam)
        rng = np.random.default_rng(80)
        self.image = GrayImage(rng.random((120, 160)))
        self.surf = LocalSurface.from_frame(self.depth, self.cam,
                                            (80, 60), 15)

    def test_identity_reproduces_the_source_pixels(self):
        got = synthesize_patch(self.surf, self.image, np.eye(3))
        want = self.image.data[53:68, 73:88]
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_inplane_rotation_matches_image_space_oracle(self):
        phi = math.radians(37.0)
        got = synthesize_patch(self.surf, self.image, rot_z(phi))
        offs = np.arange(15) - 7.0
        dx, dy = np.meshgrid(offs, offs)
        rx = math.cos(phi) * dx - math.sin(phi) * dy
        ry = math.sin(phi) * dx + math.cos(phi) * dy
        uv = np.stack([80.0 + rx, 60.0 + ry], axis=-1)
        want = bilinear_sample(self.image.data, uv)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_rejects_views_behind_the_camera(self):
        offs = np.linspace(-0.2, 0.2, 5)
        dx, dy = np.meshgrid(offs, offs)
        pts = np.stack([dx, dy, np.full_like(dx, 0.05)], axis=-1)
        normals = np.tile([0.0, 0.0, -1.0], (5, 5, 1))
        surf = LocalSurface(pts, normals, np.array([0.0, 0.0, -1.0]),
                            np.array([0.0, 0.0, 0.05]),
                            np.array([79.5, 59.5]), 0, self.cam, 5)
        with pytest.raises(ReprojectionOutOfBounds):
            synthesize_patch(surf, self.image,
                             axis_angle_rotation([1.0, 0.0, 0.0],
                                                 math.radians(60.0)))

    def test_rejects_samples_far_outside_the_image(self):
        tiny = GrayImage(np.full((20, 20), 0.5))
        with pytest.raises(ReprojectionOutOfBounds):
            synthesize_patch(self.surf, tiny, np.eye(3))

    def test_visibility_threshold(self):
        tilt80 = axis_angle_rotation([1.0, 0.0, 0.0], math.radians(80.0))
        assert view_visible(self.surf, np.eye(3))
        assert not view_visible(self.surf, tilt80)
        assert view_visible(self.surf, tilt80, min_facing=0.1)

    def test_synthesize_views_keeps_the_whole_default_grid(self):
        stack, kept = synthesize_views(self.surf, self.image)
        assert stack.shape == (80, 15, 15)
        np.testing.assert_array_equal(kept, np.arange(80))

    def test_synthesize_views_filters_tilted_views(self):
        stack, kept = synthesize_views(self.surf, self.image,
                                       min_facing=0.9)
        # only the untilted out-of-plane factor survives cos(30 deg) < 0.9
        assert len(kept) == 10
        assert kept.max().item() == 9

    def test_synthesize_views_can_reject_everything(self):
        with pytest.raises(ValueError):
            synthesize_views(self.surf, self.image, min_facing=1.5)


class TestAggregation:
    def params(self):
        return DescriptorParams(patch_size=15, bins=8, cells=2)

    def test_view_descriptors_are_normalized_per_cell(self):
        rng = np.random.default_rng(81)
        patches = rng.random((3, 15, 15))
        descs = view_descriptors(patches, self.params())
        assert len(descs) == 3
        for d in descs:
            assert d.method == "r"
            np.testing.assert_allclose(
                d.values.reshape(4, 8).sum(axis=1), 1.0, atol=1e-6)

    def test_aggregate_equals_normalized_mean_density(self):
        rng = np.random.default_rng(82)
        patches = rng.random((4, 15, 15))
        p = self.params()
        grids = np.array([patch_density(q, p).grid for q in patches])
        want = grids.mean(axis=0)
        want = want / want.sum(axis=2, keepdims=True)
        got = aggregate_descriptor(patches, p)
        np.testing.assert_allclose(got.values,
                                   want.reshape(-1), atol=1e-12)

    def test_aggregate_of_identical_views_is_the_single_view(self):
        rng = np.random.default_rng(83)
        patch = rng.random((15, 15))
        p = self.params()
        single = view_descriptors(patch[None], p)[0]
        four = aggregate_descriptor(np.repeat(patch[None], 4, axis=0), p)
        np.testing.assert_allclose(four.values, single.values, atol=1e-12)


class TestMaxOut:
    def test_minimum_squared_residual(self):
        stored = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert maxout_residual(stored, [1.0, 0.0]) == pytest.approx(1.0)
        assert maxout_residual(np.array([0.5, 0.0]), [0.0, 0.0]) \
            == pytest.approx(0.25)

    def test_matches_bruteforce_over_random_rows(self):
        rng = np.random.default_rng(84)
        stored = rng.random((12, 9))
        q = rng.random(9)
        want = min(float(np.sum((row - q) ** 2)) for row in stored)
        assert maxout_residual(stored, q) == pytest.approx(want, abs=1e-12)


class TestKeyframes:
    def test_even_spread(self):
        idx = select_keyframes(30, 10)
        assert idx[0] == 0 and idx[-1] == 29 and len(idx) == 10
        assert set(np.diff(idx)) <= {3, 4}

    def test_short_tracks_keep_everything(self):
        np.testing.assert_array_equal(select_keyframes(5, 10), np.arange(5))
        np.testing.assert_array_equal(select_keyframes(1), [0])

    def test_empty_track_rejected(self):
        with pytest.raises(ValueError):
            select_keyframes(0)
