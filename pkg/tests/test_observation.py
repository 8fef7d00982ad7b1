import math

import numpy as np
import pytest

from deltainsert.geometry import Pose4
from deltainsert.harness import standard_suite
from deltainsert.observation import (CAMERA_B_OFFSET, Observation, feature_length, features,
                                     render, unflatten)
from deltainsert.world import CrossSection, Distractor, SceneState, SocketSpec, make_scene

ROUND = CrossSection.circle(0.005)


def scene_with(pose=(0.5, 0.0, 0.0), distractors=(), hole=ROUND):
    return SceneState(SocketSpec(hole), pose, hole, distractors)


def cell_centers(gripper, width=32, fov=0.16, offset=0.0):
    """World coordinates of each cell center, computed one cell at a time."""
    out = np.empty((width, width, 2))
    c, s = math.cos(gripper.psi), math.sin(gripper.psi)
    for row in range(width):
        for col in range(width):
            u = -fov / 2 + (col + 0.5) * fov / width + offset
            v = -fov / 2 + (row + 0.5) * fov / width
            out[row, col] = (gripper.x + c * u - s * v, gripper.y + s * u + c * v)
    return out


def analytic_height(scene, x, y):
    spec = scene.socket_spec
    sx, sy, spsi = scene.socket_pose
    c, s = math.cos(spsi), math.sin(spsi)
    u, v = c * (x - sx) + s * (y - sy), -s * (x - sx) + c * (y - sy)
    h = 0.0
    half = spec.block_half_extent
    if abs(u) <= half and abs(v) <= half:
        if spec.hole.kind == "circle":
            inside = math.hypot(u, v) <= spec.hole.radius + spec.clearance
        else:
            inside = (abs(u) <= spec.hole.width / 2 + spec.clearance
                      and abs(v) <= spec.hole.height / 2 + spec.clearance)
        h = 0.0 if inside else spec.block_top
    for d in scene.distractors:
        cd, sd = math.cos(d.psi), math.sin(d.psi)
        du, dv = cd * (x - d.x) + sd * (y - d.y), -sd * (x - d.x) + cd * (y - d.y)
        if abs(du) <= d.half_x and abs(dv) <= d.half_y:
            h = max(h, d.top)
    return h


class TestRender:
    def test_empty_table(self):
        s = scene_with(pose=(0.9, 0.0, 0.0))
        grip = Pose4(0.2, 0.0, 0.1, 0.3)
        obs = render(s, grip)
        assert not obs.raster_a.any() and not obs.raster_b.any()
        assert obs.gripper_height == grip.z

    def test_hole_centered_under_gripper(self):
        s = scene_with()
        obs = render(s, Pose4(0.5, 0.0, 0.05, 0.0))
        a = obs.raster_a
        top = s.socket_spec.block_top
        assert np.all(a[15:17, 15:17] == 0.0)
        # block spans +-2.5 cm = 5 cells each side of center; hole radius 5.5 mm
        assert a[15, 12] == top and a[16, 19] == top and a[12, 16] == top
        assert a[0, 0] == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_per_cell_rasterization(self, seed):
        rng = np.random.default_rng(seed)
        s = make_scene(standard_suite()[seed % 5], rng)
        g = s.goal
        grip = Pose4(g.x + rng.uniform(-0.04, 0.04), g.y + rng.uniform(-0.04, 0.04), 0.06,
                     rng.uniform(-3, 3))
        obs = render(s, grip)
        for raster, off in ((obs.raster_a, 0.0), (obs.raster_b, CAMERA_B_OFFSET)):
            pts = cell_centers(grip, offset=off)
            ref = np.array([[analytic_height(s, *pts[r, c]) for c in range(32)] for r in range(32)])
            assert np.array_equal(raster, ref)

    def test_cells_bounded_by_scene(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = make_scene(standard_suite()[1], rng)
            obs = render(s, Pose4(s.goal.x + 0.02, s.goal.y, 0.05, 0.2))
            for r in (obs.raster_a, obs.raster_b):
                assert r.min() >= 0 and r.max() <= s.max_height

    def test_yaw_lock_equivariance(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            gx, gy = 0.5, 0.0
            s = scene_with((0.51, 0.01, 0.2), [Distractor(0.6, 0.05, 0.01, 0.015, 0.03, 0.4)],
                           CrossSection.rectangle(0.012, 0.006))
            th = rng.uniform(-math.pi, math.pi)
            c, sn = math.cos(th), math.sin(th)

            def rot(x, y):
                return gx + c * (x - gx) - sn * (y - gy), gy + sn * (x - gx) + c * (y - gy)

            sx, sy = rot(*s.socket_pose[:2])
            d = s.distractors[0]
            dx, dy = rot(d.x, d.y)
            turned = scene_with((sx, sy, s.socket_pose[2] + th),
                                [Distractor(dx, dy, d.half_x, d.half_y, d.top, d.psi + th)],
                                CrossSection.rectangle(0.012, 0.006))
            a = render(s, Pose4(gx, gy, 0.05, 0.1))
            b = render(turned, Pose4(gx, gy, 0.05, 0.1 + th))
            assert a == b

    def test_translation_equivariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            tx, ty = rng.uniform(-0.05, 0.05, 2)
            s = scene_with((0.5, 0.0, 0.3))
            moved = scene_with((0.5 + tx, ty, 0.3))
            grip = Pose4(0.49, 0.01, 0.05, 0.7)
            assert render(s, grip) == render(moved, grip.replace(x=grip.x + tx, y=grip.y + ty))

    def test_mismatched_rasters_rejected(self):
        with pytest.raises(ValueError):
            Observation(np.zeros((4, 4)), np.zeros((3, 3)), 0.0)


class TestFeatures:
    def test_zero(self):
        obs = Observation(np.zeros((32, 32)), np.zeros((32, 32)), 0.0)
        f = features(obs)
        assert f.shape == (feature_length(),) == (2049,)
        assert not f.any()

    def test_layout_and_scale(self):
        a = np.arange(16.0).reshape(4, 4) * 0.001
        b = -a
        f = features(Observation(a, b, 0.07))
        assert np.allclose(f[:16], a.ravel() / 0.05, rtol=1e-15)
        assert np.allclose(f[16:32], b.ravel() / 0.05, rtol=1e-15)
        assert f[-1] == pytest.approx(0.07 / 0.05, rel=1e-15)

    def test_identical_observations(self):
        s = scene_with()
        g = Pose4(0.49, 0.0, 0.05, 0.0)
        assert np.array_equal(features(render(s, g)), features(render(s, g)))

    def test_round_trip_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            s = make_scene(standard_suite()[2], rng)
            obs = render(s, Pose4(s.goal.x + 0.01, s.goal.y, rng.uniform(0.01, 0.1), 0.4))
            assert unflatten(features(obs)) == obs

    def test_bad_length(self):
        with pytest.raises(ValueError):
            unflatten(np.zeros(10))
