"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured runtime. Run with `pytest tests/test_acceptance.py -v -s`."""

import json
import math
import time

import numpy as np
import pytest

from brute import brute_metrics
from conftest import write_config, write_head_assets
from facedepth.cli import main
from facedepth.dataset_io import DepthEncoding, decode_depth16, encode_depth16
from facedepth.metrics import (ALIGN_AFFINE, ALIGN_MEDIAN, MetricReport,
                               align_prediction, compute_metrics, format_report,
                               valid_mask)
from facedepth.render import DepthMap, rasterize, render_frame
from facedepth.scene import (CameraRig, PointLight, SweepConfig, intrinsics,
                             sample_scene)
from facedepth.synth import fronto_parallel_quad, procedural_head, uv_sphere
from facedepth.transforms import RigidTransform


class Budget:
    def __init__(self, criterion, limit_s):
        self.criterion = criterion
        self.limit_s = limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if exc_type is None:
            assert dt < self.limit_s, \
                "criterion %s exceeded budget: %.1f s >= %.0f s" % (self.criterion, dt, self.limit_s)
            print("[acceptance] criterion %s PASS (%.2f s, budget %.0f s)"
                  % (self.criterion, dt, self.limit_s))
        return False


def test_criterion_1_configuration_fidelity():
    with Budget("1 configuration fidelity", 1.0):
        cam = CameraRig()
        assert (cam.focal_length_mm, cam.sensor_width_mm) == (60.0, 36.0)
        assert (cam.width_px, cam.height_px) == (480, 640)
        assert (cam.near_clip_m, cam.far_clip_m) == (0.01, 5.0)
        intr = intrinsics(cam)
        assert (intr.fx, intr.fy, intr.cx, intr.cy) == (800.0, 800.0, 240.0, 320.0)
        sweep = SweepConfig()
        assert sweep.distance_m == (0.7, 1.0)
        for i in range(10000):
            d = sample_scene(sweep, i, 1234).camera_distance
            assert 0.700 <= d <= 1.000


def test_criterion_2_analytic_depth_oracle():
    with Budget("2 analytic depth oracle", 5.0):
        cam = CameraRig()
        light = PointLight(position=(0.0, 0.0, 0.0))

        packet = rasterize(fronto_parallel_quad(0.9), cam, light)
        assert packet.mask.all()
        assert np.all(packet.depth.values == 0.9)          # exact in float buffer
        enc = DepthEncoding()
        back = decode_depth16(encode_depth16(packet.depth, enc), enc)
        assert np.max(np.abs(back.values - 0.9)) <= 0.05e-3  # after 16-bit round-trip

        sphere = uv_sphere(radius=0.1, center=(0.0, 0.0, -0.85), rings=72, segments=72)
        assert sphere.n_triangles >= 10000
        sp = rasterize(sphere, cam, light)
        assert abs(sp.depth.values[320, 240] - 0.75) <= 1e-3


def test_criterion_3_self_evaluation_identity(tmp_path, capsys):
    with Budget("3 self-evaluation identity", 60.0):
        assets = write_head_assets(tmp_path / "assets")
        cfg = tmp_path / "run.json"
        write_config(cfg, assets, frame_count=50, seed=77,
                     camera={"focal_length_mm": 60, "sensor_width_mm": 36,
                             "width_px": 480, "height_px": 640,
                             "near_clip_m": 0.01, "far_clip_m": 5.0})
        assert main(["render", "--config", str(cfg)]) == 0
        out = tmp_path / "out"
        report_json = tmp_path / "self.json"
        assert main(["eval", "--gt", str(out), "--pred", str(out),
                     "--report-json", str(report_json)]) == 0
        agg = json.loads(report_json.read_text())["aggregate"]
        assert agg["abs_rel"] == 0.0
        assert agg["sq_rel"] == 0.0
        assert agg["rmse"] == 0.0
        assert agg["rmse_log"] == 0.0
        assert agg["delta1"] == 1.0
        assert agg["delta2"] == 1.0
        assert agg["delta3"] == 1.0
        capsys.readouterr()


def test_criterion_4_metric_oracle_equivalence():
    with Budget("4 metric oracle equivalence", 30.0):
        rng = np.random.default_rng(99)
        for _ in range(100):
            gt = rng.uniform(0.05, 6.0, (8, 8))
            pred = gt * np.exp(rng.normal(0.0, 0.4, (8, 8)))
            mask = rng.uniform(size=(8, 8)) < 0.9
            mask[0, 0] = True
            got = np.array(compute_metrics(gt, pred, mask).as_tuple())
            want = np.array(brute_metrics(gt.tolist(), pred.tolist(), mask.tolist()))
            nz = want != 0
            assert np.all(np.abs(got[nz] - want[nz]) / np.abs(want[nz]) < 1e-12)
            assert np.all(np.abs(got[~nz]) < 1e-12)

        gt = np.array([[1.0, 2.0, 4.0]])
        rep = compute_metrics(gt, 1.25 * gt, np.ones((1, 3), bool))
        assert rep.delta1 == 0.0
        assert rep.delta2 == 1.0 and rep.delta3 == 1.0
        assert rep.abs_rel == 0.25


def test_criterion_5_alignment_recovery():
    with Budget("5 alignment recovery", 30.0):
        rng = np.random.default_rng(12)
        gt = rng.uniform(0.4, 3.5, (16, 16))
        mask = np.ones((16, 16), bool)

        pred_inv = (1.0 / gt - 0.3) / 2.0     # exact affine corruption a=2, b=0.3
        aligned = align_prediction(gt, pred_inv, mask, ALIGN_AFFINE)
        # recovering (a, b) reproduces 1/gt, so aligned depth matches gt
        rep = compute_metrics(gt, aligned, valid_mask(gt, aligned))
        assert rep.abs_rel < 1e-9
        A = np.column_stack([pred_inv.ravel(), np.ones(gt.size)])
        (a, b), *_ = np.linalg.lstsq(A, 1.0 / gt.ravel(), rcond=None)
        assert abs(a - 2.0) < 1e-9 and abs(b - 0.3) < 1e-9

        doubled = 2.0 * gt
        med = align_prediction(gt, doubled, mask, ALIGN_MEDIAN)
        assert compute_metrics(gt, med, mask).abs_rel == 0.0


@pytest.mark.slow
def test_criterion_6_determinism_across_workers(tmp_path):
    with Budget("6 determinism across workers", 300.0):
        assets = write_head_assets(tmp_path / "assets")
        cfg = tmp_path / "run.json"
        write_config(cfg, assets, frame_count=100, seed=20240713,
                     camera={"focal_length_mm": 60, "sensor_width_mm": 36,
                             "width_px": 480, "height_px": 640,
                             "near_clip_m": 0.01, "far_clip_m": 5.0})
        outs = {}
        for workers in (1, 4, 8):
            out = tmp_path / ("run_w%d" % workers)
            assert main(["render", "--config", str(cfg), "--workers", str(workers),
                         "--out", str(out)]) == 0
            outs[workers] = out

        def manifest_normalized(out):
            lines = []
            for line in (out / "manifest.jsonl").read_text().splitlines():
                obj = json.loads(line)
                if obj.get("type") == "header":
                    obj["config"]["output_dir"] = "OUT"   # paths excluded
                lines.append(json.dumps(obj, sort_keys=True))
            return "\n".join(lines)

        ref = outs[1]
        ref_manifest = manifest_normalized(ref)
        for workers in (4, 8):
            other = outs[workers]
            for i in range(100):
                name = "depth/%06d.png" % i
                assert (ref / name).read_bytes() == (other / name).read_bytes(), \
                    "depth differs at frame %d for workers=%d" % (i, workers)
            assert manifest_normalized(other) == ref_manifest


def test_criterion_7_roundtrip_encoding():
    with Budget("7 round-trip encoding", 60.0):
        enc = DepthEncoding()
        # integer-level identity over the entire 16-bit range
        codes = np.arange(65536, dtype=np.uint16).reshape(256, 256)
        again = encode_depth16(decode_depth16(codes, enc), enc)
        assert np.array_equal(again, codes)
        # metric round-trip under half a quantization step, 1e6 random depths
        rng = np.random.default_rng(31337)
        d = rng.uniform(0.01, 5.0, size=(1000, 1000))
        d[d <= 0.01] = 0.0100001
        depth = DepthMap(d)
        back = decode_depth16(encode_depth16(depth, enc), enc)
        err = np.abs(back.values - d)
        assert err.max() < 0.05e-3


def test_criterion_8_table_fixture():
    with Budget("8 table fixture", 5.0):
        dense = MetricReport(0.8765, 0.7783, 1.8783, 0.2260, 0.2723, 0.5093, 0.6912,
                             valid_pixel_count=1)
        midas = MetricReport(0.8876, 0.9765, 1.9876, 0.3323, 0.3211, 0.5432, 0.7635,
                             valid_pixel_count=1)
        assert "0.8765 0.7783 1.8783 0.2260 0.2723 0.5093 0.6912" \
            in format_report(dense, name="DenseDepth")
        assert "0.8876 0.9765 1.9876 0.3323 0.3211 0.5432 0.7635" \
            in format_report(midas, name="MiDas")


def test_criterion_9_fuzz_invariants():
    with Budget("9 fuzz invariants", 120.0):
        rng = np.random.default_rng(2718)
        for _ in range(1000):
            gt = rng.uniform(0.02, 6.0, (4, 4))
            pred = gt * np.exp(rng.normal(0.0, 0.6, (4, 4)))
            mask = np.ones((4, 4), bool)
            c = float(rng.uniform(0.05, 20.0))
            r = compute_metrics(gt, pred, mask)
            assert r.delta1 <= r.delta2 <= r.delta3
            s = compute_metrics(pred, gt, mask)
            assert (r.delta1, r.delta2, r.delta3) == (s.delta1, s.delta2, s.delta3)
            sc = compute_metrics(c * gt, c * pred, mask)
            assert math.isclose(sc.abs_rel, r.abs_rel, rel_tol=1e-9)
            assert math.isclose(sc.rmse, c * r.rmse, rel_tol=1e-9)
            assert all(np.isfinite(v) for v in r.as_tuple())

        # rendered outputs stay finite under random poses
        cam = CameraRig(width_px=96, height_px=128)
        head = procedural_head(rings=16, segments=16)
        from facedepth.mesh import ExpressionWeights
        for i in range(12):
            sample_pose = RigidTransform.from_euler_deg(
                rng.uniform(-90, 90), rng.uniform(-45, 45), rng.uniform(-20, 20),
                translation=(0.0, 0.0, -rng.uniform(0.3, 1.5)))
            from facedepth.scene import SceneSample
            s = SceneSample(camera_distance=-sample_pose.translation[2],
                            head_pose=sample_pose,
                            expression=ExpressionWeights({"happy": rng.uniform(0, 1)}),
                            light=PointLight(position=rng.uniform(-0.8, 0.8, 3)),
                            frame_index=i, seed=0)
            packet = render_frame(head, s, cam)
            assert np.all(np.isfinite(packet.depth.values))
            assert packet.rgb.pixels.dtype == np.uint8
            if packet.mask.any():
                v = packet.depth.values[packet.mask]
                assert v.min() > cam.near_clip_m and v.max() <= cam.far_clip_m
