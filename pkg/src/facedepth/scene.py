"""Physical camera model, lights and seed-deterministic scene sampling.

The camera is fixed at the world origin looking down -z; all per-frame
variation (subject distance, head rotation, expression, light placement)
lives in the sampled head pose and light. Pixel coordinates follow the
image convention: u right, v down, so camera-space +y maps to further down
the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, GeometryError
from .mesh import ExpressionWeights
from .transforms import RigidTransform, rot_x, rot_y, rot_z

# Reserved expression name: renders the unmodified base mesh.
NEUTRAL = "neutral"


class Intrinsics(NamedTuple):
    fx: float
    fy: float
    cx: float
    cy: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraRig:
    """Physical pinhole camera: focal length / sensor width in millimeters,
    clip distances in meters, plus a camera-to-world pose."""

    focal_length_mm: float = 60.0
    sensor_width_mm: float = 36.0
    width_px: int = 480
    height_px: int = 640
    near_clip_m: float = 0.01
    far_clip_m: float = 5.0
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.focal_length_mm > 0 and self.sensor_width_mm > 0):
            raise ConfigError("focal length and sensor width must be positive")
        if not (0 < self.near_clip_m < self.far_clip_m):
            raise ConfigError("clips must satisfy 0 < near < far")
        if self.width_px < 1 or self.height_px < 1:
            raise ConfigError("resolution must be at least 1x1")

    def to_dict(self) -> dict:
        return {
            "focal_length_mm": self.focal_length_mm,
            "sensor_width_mm": self.sensor_width_mm,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "near_clip_m": self.near_clip_m,
            "far_clip_m": self.far_clip_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRig":
        known = {k: d[k] for k in ("focal_length_mm", "sensor_width_mm", "width_px",
                                   "height_px", "near_clip_m", "far_clip_m") if k in d}
        return cls(**known)


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: float = 0.66
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ConfigError("light position must be finite")
        if self.intensity < 0:
            raise ConfigError("light intensity must be >= 0")
        c = tuple(float(x) for x in self.color)
        if len(c) != 3 or any(not 0.0 <= x <= 1.0 for x in c):
            raise ConfigError("light color components must lie in [0, 1]")
        p.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "color", c)


@dataclass(frozen=True)
class SceneSample:
    """Everything that varies per frame, drawn from one deterministic
    per-frame random stream."""

    camera_distance: float
    head_pose: RigidTransform
    expression: ExpressionWeights
    light: PointLight
    frame_index: int
    seed: int
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0

    def __post_init__(self):
        if self.frame_index < 0:
            raise ConfigError("frame_index must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    """Ranges for the randomized sweep. Distances in meters, angles in
    degrees; all continuous ranges are sampled uniformly."""

    distance_m: tuple[float, float] = (0.7, 1.0)
    yaw_deg: tuple[float, float] = (-45.0, 45.0)
    pitch_deg: tuple[float, float] = (-20.0, 20.0)
    roll_deg: tuple[float, float] = (-10.0, 10.0)
    expressions: tuple[str, ...] = (NEUTRAL,)
    light_box_m: tuple[tuple[float, float], ...] = ((-0.5, 0.5), (-0.5, 0.5), (-0.25, 0.25))
    light_intensity: float = 0.66
    light_color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ambient: float = 0.15
    upright_flip: bool = True

    def __post_init__(self):
        for name in ("distance_m", "yaw_deg", "pitch_deg", "roll_deg"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ConfigError("%s range [%r, %r] is inverted or not finite" % (name, lo, hi))
        if self.distance_m[0] <= 0:
            raise ConfigError("distance range must be positive")
        if not self.expressions:
            raise ConfigError("expression set must not be empty")
        if len(self.light_box_m) != 3:
            raise ConfigError("light_box_m needs one (lo, hi) pair per axis")
        for lo, hi in self.light_box_m:
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ConfigError("light box range [%r, %r] is inverted or not finite" % (lo, hi))
        if self.ambient < 0 or self.light_intensity < 0:
            raise ConfigError("ambient and light intensity must be >= 0")

    def to_dict(self) -> dict:
        # config-file units: millimeters and degrees
        return {
            "distance_mm": [self.distance_m[0] * 1000.0, self.distance_m[1] * 1000.0],
            "yaw_deg": list(self.yaw_deg),
            "pitch_deg": list(self.pitch_deg),
            "roll_deg": list(self.roll_deg),
            "expressions": list(self.expressions),
            "light_box_m": [list(pair) for pair in self.light_box_m],
            "light_intensity": self.light_intensity,
            "light_color": list(self.light_color),
            "ambient": self.ambient,
            "upright_flip": self.upright_flip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        kwargs = {}
        if "distance_mm" in d:
            lo, hi = d["distance_mm"]
            kwargs["distance_m"] = (float(lo) / 1000.0, float(hi) / 1000.0)
        for key in ("yaw_deg", "pitch_deg", "roll_deg"):
            if key in d:
                kwargs[key] = tuple(float(x) for x in d[key])
        if "expressions" in d:
            kwargs["expressions"] = tuple(str(x) for x in d["expressions"])
        if "light_box_m" in d:
            kwargs["light_box_m"] = tuple(tuple(float(x) for x in pair) for pair in d["light_box_m"])
        for key in ("light_intensity", "ambient"):
            if key in d:
                kwargs[key] = float(d[key])
        if "light_color" in d:
            kwargs["light_color"] = tuple(float(x) for x in d["light_color"])
        if "upright_flip" in d:
            kwargs["upright_flip"] = bool(d["upright_flip"])
        return cls(**kwargs)


def intrinsics(cam: CameraRig) -> Intrinsics:
    """Pixel-space pinhole intrinsics. fx = width * focal / sensor_width,
    square pixels, principal point at the image center."""
    fx = cam.width_px * cam.focal_length_mm / cam.sensor_width_mm
    return Intrinsics(fx=fx, fy=fx, cx=cam.width_px / 2.0, cy=cam.height_px / 2.0)


def project(cam: CameraRig, points: np.ndarray, intr: Intrinsics | None = None):
    """Project world points of shape (..., 3) through the pinhole.

    Returns (u, v, depth, in_front). Depth is the positive distance along
    the optical axis; points at or behind the camera plane have
    in_front=False and NaN pixel coordinates (the behind-camera marker),
    and no division is performed for them.
    """
    if intr is None:
        intr = intrinsics(cam)
    pts = np.asarray(points, dtype=np.float64)
    cam_pts = cam.pose.inverse().apply(pts)
    x, y, z_cam = cam_pts[..., 0], cam_pts[..., 1], cam_pts[..., 2]
    depth = -z_cam
    in_front = depth > 0.0
    safe = np.where(in_front, depth, 1.0)
    u = np.where(in_front, intr.cx + intr.fx * x / safe, np.nan)
    v = np.where(in_front, intr.cy + intr.fy * y / safe, np.nan)
    return u, v, depth, in_front


def unproject(cam: CameraRig, u, v, depth, intr: Intrinsics | None = None) -> np.ndarray:
    """Inverse of project for depth > 0: pixel (u, v) at planar depth z back
    to world coordinates."""
    if intr is None:
        intr = intrinsics(cam)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    cam_pts = np.stack([x, y, -z], axis=-1)
    return cam.pose.apply(cam_pts)


def frame_seed_sequence(global_seed: int, frame_index: int) -> np.random.SeedSequence:
    """The per-frame seed mix: identical inputs give an identical stream
    regardless of how many frames were sampled before."""
    if global_seed < 0 or frame_index < 0:
        raise ConfigError("seed and frame index must be non-negative")
    return np.random.SeedSequence([int(global_seed), int(frame_index)])


def sample_scene(config: SweepConfig, frame_index: int, global_seed: int) -> SceneSample:
    """Draw one frame's scene configuration.

    The per-frame stream consumes a single block of eight uniform doubles
    in [0, 1), in the order: distance, yaw, pitch, roll, expression choice,
    light x/y/z; each is mapped onto its configured range as lo + u*(hi-lo).
    Sampling frame k never depends on other frames, so any subset can be
    generated in any order (or in parallel) with bit-identical results.
    """
    seq = frame_seed_sequence(global_seed, frame_index)
    frame_seed = int(seq.generate_state(1, np.uint64)[0])
    rng = np.random.default_rng(seq)

    u = rng.random(8)

    def span(r, ui):
        lo, hi = r
        return lo + ui * (hi - lo)

    distance = span(config.distance_m, u[0])
    yaw = span(config.yaw_deg, u[1])
    pitch = span(config.pitch_deg, u[2])
    roll = span(config.roll_deg, u[3])
    n_expr = len(config.expressions)
    expr_name = config.expressions[min(int(u[4] * n_expr), n_expr - 1)]
    light_pos = (span(config.light_box_m[0], u[5]),
                 span(config.light_box_m[1], u[6]),
                 span(config.light_box_m[2], u[7]))

    deg = np.pi / 180.0
    rotation = rot_y(yaw * deg) @ rot_x(pitch * deg) @ rot_z(roll * deg)
    if config.upright_flip:
        # map y-up authored assets into the y-down world, keeping them
        # facing +z (toward the camera)
        rotation = rot_z(np.pi) @ rotation
    pose = RigidTransform(rotation, (0.0, 0.0, -distance))

    if expr_name == NEUTRAL:
        expression = ExpressionWeights.neutral()
    else:
        expression = ExpressionWeights({expr_name: 1.0})

    light = PointLight(position=light_pos, intensity=config.light_intensity,
                       color=config.light_color)
    return SceneSample(
        camera_distance=float(distance),
        head_pose=pose,
        expression=expression,
        light=light,
        frame_index=int(frame_index),
        seed=frame_seed,
        yaw_deg=float(yaw),
        pitch_deg=float(pitch),
        roll_deg=float(roll),
    )


def light_direction(sample: SceneSample, head_origin) -> np.ndarray:
    """Unit vector from the head origin toward the light."""
    origin = np.asarray(head_origin, dtype=np.float64).reshape(3)
    delta = sample.light.position - origin
    norm = np.linalg.norm(delta)
    if norm == 0.0:
        raise GeometryError("light position coincides with the head origin")
    return delta / norm
