import json
from pathlib import Path

import numpy as np
import pytest

from facedepth.mesh import serialize_obj
from facedepth.render import RgbImage
from facedepth.scene import CameraRig
from facedepth.synth import procedural_head
from PIL import Image


@pytest.fixture(scope="session")
def head():
    return procedural_head(rings=32, segments=32)


@pytest.fixture(scope="session")
def default_cam():
    return CameraRig()


@pytest.fixture(scope="session")
def small_cam():
    return CameraRig(width_px=120, height_px=160)


def write_head_assets(root: Path, rings=24, segments=24):
    """Write a base OBJ, per-expression OBJs, a morph manifest and a
    background PNG under root; returns the paths dict."""
    root.mkdir(parents=True, exist_ok=True)
    head = procedural_head(rings=rings, segments=segments)
    base_path = root / "head.obj"
    base_path.write_text(serialize_obj(head), encoding="utf-8")
    lines = []
    for name, delta in sorted(head.morphs.items()):
        expr_mesh = type(head)(head.vertices + delta, head.triangles)
        p = root / ("%s.obj" % name)
        p.write_text(serialize_obj(expr_mesh), encoding="utf-8")
        lines.append("%s = %s" % (name, p.name))
    manifest = root / "morphs.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    bg = root / "background.png"
    rng = np.random.default_rng(5)
    px = rng.integers(20, 120, size=(160, 120, 3), dtype=np.uint8)
    Image.fromarray(px, mode="RGB").save(bg)
    return {"mesh": base_path, "morphs": manifest, "background": bg}


def write_config(path: Path, assets, **overrides):
    cfg = {
        "mesh": str(assets["mesh"]),
        "morphs": str(assets["morphs"]),
        "background": str(assets["background"]),
        "output_dir": str(path.parent / "out"),
        "frame_count": 3,
        "seed": 7,
        "workers": 1,
        "camera": {"focal_length_mm": 60, "sensor_width_mm": 36,
                   "width_px": 120, "height_px": 160,
                   "near_clip_m": 0.01, "far_clip_m": 5.0},
        "sweep": {"distance_mm": [700, 1000], "yaw_deg": [-45, 45],
                  "pitch_deg": [-20, 20], "roll_deg": [-10, 10],
                  "expressions": ["neutral", "happy", "sad", "angry", "scared"]},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg, indent=1), encoding="utf-8")
    return cfg


@pytest.fixture()
def cli_assets(tmp_path):
    return write_head_assets(tmp_path / "assets")


def as_rgb(arr) -> RgbImage:
    return RgbImage(np.asarray(arr, dtype=np.uint8))
