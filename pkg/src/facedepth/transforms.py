"""Rigid transforms and rotation helpers.

Conventions used throughout the package:

* World and camera frames are x-right, y-down (aligned with image rows),
  with the camera at the origin looking down -z. Visible geometry sits at
  negative camera-space z; metric depth is the positive distance -z along
  the optical axis.
* Rotations are 3x3 orthonormal matrices with determinant +1, applied as
  column-vector products: p' = R @ p + t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ORTHONORMAL_TOL = 1e-6


def rot_x(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: rotation followed by translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ConfigError("rigid transform needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ConfigError("rigid transform entries must be finite")
        # unrolled orthonormality + determinant checks; this runs once per
        # sampled frame so the allclose/linalg machinery is worth avoiding
        g00, g01, g02, _, g11, g12, _, _, g22 = (R.T @ R).ravel().tolist()
        dev = max(abs(g00 - 1.0), abs(g11 - 1.0), abs(g22 - 1.0),
                  abs(g01), abs(g02), abs(g12))
        if dev > ORTHONORMAL_TOL:
            raise ConfigError("rotation matrix is not orthonormal")
        r00, r01, r02, r10, r11, r12, r20, r21, r22 = R.ravel().tolist()
        det = (r00 * (r11 * r22 - r12 * r21)
               - r01 * (r10 * r22 - r12 * r20)
               + r02 * (r10 * r21 - r11 * r20))
        if det < 0.0:
            raise ConfigError("rotation matrix has determinant -1 (reflection)")
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_euler_deg(cls, yaw: float, pitch: float, roll: float,
                       translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Yaw about +y (vertical), pitch about +x, roll about +z, composed
        as R = Ry(yaw) @ Rx(pitch) @ Rz(roll)."""
        y, p, r = np.deg2rad([yaw, pitch, roll])
        return cls(rot_y(y) @ rot_x(p) @ rot_z(r), np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (no translation)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self applied after other: (self @ other)(p) = self(other(p))."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -(Rt @ self.translation))
