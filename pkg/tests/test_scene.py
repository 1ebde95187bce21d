import random

import numpy as np
import pytest

from facedepth.errors import ConfigError, GeometryError
from facedepth.scene import (CameraRig, PointLight, SweepConfig, intrinsics,
                             light_direction, project, sample_scene, unproject)
from facedepth.transforms import RigidTransform


class TestIntrinsics:
    def test_paper_defaults(self, default_cam):
        intr = intrinsics(default_cam)
        assert intr == (800.0, 800.0, 240.0, 320.0)

    def test_focal_equals_sensor(self):
        cam = CameraRig(focal_length_mm=36, sensor_width_mm=36, width_px=100, height_px=100)
        assert intrinsics(cam).fx == 100.0

    def test_width_doubling_doubles_fx(self, default_cam):
        wide = CameraRig(width_px=default_cam.width_px * 2)
        assert intrinsics(wide).fx == 2.0 * intrinsics(default_cam).fx

    def test_scale_consistency(self):
        a = CameraRig(focal_length_mm=60, sensor_width_mm=36)
        b = CameraRig(focal_length_mm=120, sensor_width_mm=72)
        pts = np.random.default_rng(1).uniform(-1, 1, size=(50, 3))
        pts[:, 2] = -np.abs(pts[:, 2]) - 0.2
        ua, va, za, fa = project(a, pts)
        ub, vb, zb, fb = project(b, pts)
        assert np.array_equal(ua, ub) and np.array_equal(va, vb)

    def test_invalid_rig_rejected(self):
        with pytest.raises(ConfigError):
            CameraRig(near_clip_m=2.0, far_clip_m=1.0)
        with pytest.raises(ConfigError):
            CameraRig(focal_length_mm=0)
        with pytest.raises(ConfigError):
            CameraRig(width_px=0)


class TestProjection:
    def test_on_axis_point(self, default_cam):
        u, v, z, ok = project(default_cam, [0.0, 0.0, -0.85])
        assert ok and (u, v, z) == (240.0, 320.0, 0.85)

    def test_offset_point(self, default_cam):
        u, v, z, ok = project(default_cam, [0.085, 0.0, -0.85])
        assert u == 320.0 and v == 320.0

    def test_behind_camera_marker(self, default_cam):
        u, v, z, ok = project(default_cam, [0.0, 0.0, 0.0])
        assert not ok
        assert np.isnan(u) and np.isnan(v)

    def test_batch_mixed(self, default_cam):
        pts = np.array([[0, 0, -1.0], [0, 0, 2.0]])
        u, v, z, ok = project(default_cam, pts)
        assert ok.tolist() == [True, False]

    def test_project_unproject_roundtrip(self, default_cam):
        rng = np.random.default_rng(2)
        u = rng.uniform(0, 480, size=200)
        v = rng.uniform(0, 640, size=200)
        z = rng.uniform(0.011, 4.99, size=200)
        pts = unproject(default_cam, u, v, z)
        u2, v2, z2, ok = project(default_cam, pts)
        assert ok.all()
        assert np.max(np.abs(u2 - u)) < 1e-6
        assert np.max(np.abs(v2 - v)) < 1e-6
        assert np.max(np.abs(z2 - z)) < 1e-6

    def test_posed_camera(self):
        pose = RigidTransform.from_euler_deg(0, 0, 0, translation=(0.0, 0.0, 1.0))
        cam = CameraRig(pose=pose)
        # camera moved 1 m back: a point at the old origin is 1 m in front
        u, v, z, ok = project(cam, [0.0, 0.0, 0.0])
        assert ok and z == 1.0 and (u, v) == (240.0, 320.0)


class TestSampling:
    def test_deterministic(self):
        sw = SweepConfig()
        a = sample_scene(sw, 11, 42)
        b = sample_scene(sw, 11, 42)
        assert a.camera_distance == b.camera_distance
        assert np.array_equal(a.head_pose.rotation, b.head_pose.rotation)
        assert np.array_equal(a.light.position, b.light.position)
        assert a.seed == b.seed

    def test_paper_distance_range(self):
        sw = SweepConfig()
        ds = [sample_scene(sw, i, 9).camera_distance for i in range(2000)]
        assert all(0.700 <= d <= 1.000 for d in ds)

    def test_distance_mean_oracle(self):
        # frozen from a brute-force simulation of the same seeded stream
        sw = SweepConfig()
        ds = [sample_scene(sw, i, 42).camera_distance for i in range(10000)]
        assert 0.82 <= float(np.mean(ds)) <= 0.88

    def test_stream_matches_direct_rng(self):
        # the per-frame stream is SeedSequence([seed, index]) consumed as a
        # block of eight uniforms in the documented order; re-derive one
        # frame independently
        sw = SweepConfig()
        s = sample_scene(sw, 1234, 42)
        rng = np.random.default_rng(np.random.SeedSequence([42, 1234]))
        u = rng.random(8)
        assert s.camera_distance == 0.7 + u[0] * 0.3
        assert s.yaw_deg == -45 + u[1] * 90
        assert s.pitch_deg == -20 + u[2] * 40
        assert s.roll_deg == -10 + u[3] * 20
        assert s.light.position[0] == -0.5 + u[5] * 1.0

    def test_order_independence(self):
        sw = SweepConfig()
        sequential = [sample_scene(sw, i, 5).camera_distance for i in range(200)]
        order = list(range(200))
        random.Random(0).shuffle(order)
        shuffled = {i: sample_scene(sw, i, 5).camera_distance for i in order}
        assert all(shuffled[i] == sequential[i] for i in range(200))

    def test_ranges_property(self):
        sw = SweepConfig(yaw_deg=(-30, 10), pitch_deg=(-5, 5), roll_deg=(0, 2),
                         distance_m=(0.8, 0.9))
        for i in range(10000):
            s = sample_scene(sw, i, 3)
            assert 0.8 <= s.camera_distance <= 0.9
            assert -30 <= s.yaw_deg <= 10
            assert -5 <= s.pitch_deg <= 5
            assert 0 <= s.roll_deg <= 2

    def test_expression_membership_and_light_box(self):
        sw = SweepConfig(expressions=("neutral", "happy"),
                         light_box_m=((0, 1), (2, 3), (-1, -0.5)))
        names = set()
        for i in range(300):
            s = sample_scene(sw, i, 8)
            if s.expression.weights:
                assert set(s.expression.weights) <= {"happy"}
                names.add("happy")
            else:
                names.add("neutral")
            x, y, z = s.light.position
            assert 0 <= x <= 1 and 2 <= y <= 3 and -1 <= z <= -0.5
        assert names == {"neutral", "happy"}

    def test_distance_lands_in_translation(self):
        sw = SweepConfig()
        s = sample_scene(sw, 0, 1)
        assert s.head_pose.translation[2] == -s.camera_distance

    def test_upright_flip_toggles_rotation(self):
        base = SweepConfig(upright_flip=False, yaw_deg=(0, 0), pitch_deg=(0, 0),
                           roll_deg=(0, 0))
        flip = SweepConfig(upright_flip=True, yaw_deg=(0, 0), pitch_deg=(0, 0),
                           roll_deg=(0, 0))
        r0 = sample_scene(base, 0, 1).head_pose.rotation
        r1 = sample_scene(flip, 0, 1).head_pose.rotation
        assert np.allclose(r0, np.eye(3))
        assert np.allclose(r1, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            SweepConfig(expressions=())
        with pytest.raises(ConfigError):
            SweepConfig(distance_m=(1.0, 0.7))
        with pytest.raises(ConfigError):
            SweepConfig(yaw_deg=(np.inf, 0))
        with pytest.raises(ConfigError):
            sample_scene(SweepConfig(), 0, -1)

    def test_config_dict_roundtrip(self):
        sw = SweepConfig(distance_m=(0.75, 0.95), expressions=("neutral", "sad"),
                         light_intensity=0.5, upright_flip=False)
        again = SweepConfig.from_dict(sw.to_dict())
        assert again == sw


class TestLightDirection:
    def test_axis_aligned(self):
        sw = SweepConfig(light_box_m=((0, 0), (0, 0), (1, 1)))
        s = sample_scene(sw, 0, 0)
        assert np.allclose(light_direction(s, (0, 0, 0)), [0, 0, 1])

    def test_diagonal(self):
        sw = SweepConfig(light_box_m=((1, 1), (1, 1), (0, 0)))
        s = sample_scene(sw, 0, 0)
        d = light_direction(s, (0, 0, 0))
        assert np.allclose(d, [np.sqrt(2) / 2, np.sqrt(2) / 2, 0.0])
        assert abs(np.linalg.norm(d) - 1.0) < 1e-9

    def test_coincident_rejected(self):
        sw = SweepConfig(light_box_m=((0, 0), (0, 0), (0, 0)))
        s = sample_scene(sw, 0, 0)
        with pytest.raises(GeometryError):
            light_direction(s, (0.0, 0.0, 0.0))

    def test_light_invariants(self):
        with pytest.raises(ConfigError):
            PointLight(position=(0, 0, 0), intensity=-1.0)
        with pytest.raises(ConfigError):
            PointLight(position=(0, 0, 0), color=(2.0, 0.0, 0.0))
