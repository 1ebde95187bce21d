"""Procedural geometry and backgrounds for tests and demos.

Nothing here is required for rendering real head scans; these factories
exist so the pipeline can be exercised end to end without shipping binary
assets. The head is deliberately cartoonish: an ellipsoid with a nose bump
and smooth morph-target fields for the standard expression set.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, recompute_normals
from .render import RgbImage

EXPRESSIONS = ("angry", "happy", "sad", "scared")


def uv_sphere(radius: float = 0.1, center=(0.0, 0.0, 0.0),
              rings: int = 32, segments: int = 32) -> TriMesh:
    """Latitude-longitude sphere with poles on the z axis and exact
    analytic normals."""
    center = np.asarray(center, dtype=np.float64)
    verts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, rings):
        theta = np.pi * i / rings
        st, ct = np.sin(theta), np.cos(theta)
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            verts.append(np.array([st * np.cos(phi), st * np.sin(phi), ct]))
    verts.append(np.array([0.0, 0.0, -1.0]))
    dirs = np.asarray(verts)

    tris = []
    def ring_start(i):
        return 1 + (i - 1) * segments
    for j in range(segments):
        tris.append((0, ring_start(1) + j, ring_start(1) + (j + 1) % segments))
    for i in range(1, rings - 1):
        a, b = ring_start(i), ring_start(i + 1)
        for j in range(segments):
            j2 = (j + 1) % segments
            tris.append((a + j, b + j, b + j2))
            tris.append((a + j, b + j2, a + j2))
    south = len(dirs) - 1
    a = ring_start(rings - 1)
    for j in range(segments):
        tris.append((south, a + (j + 1) % segments, a + j))

    return TriMesh(center + radius * dirs, np.asarray(tris, dtype=np.int64), normals=dirs)


def fronto_parallel_quad(z: float, half_x: float = 0.5, half_y: float = 0.5,
                         center_xy=(0.0, 0.0)) -> TriMesh:
    """Square parallel to the image plane at camera-space depth z (meters in
    front of the camera, which looks down -z). Faces the camera."""
    cx, cy = center_xy
    v = np.array([
        [cx - half_x, cy - half_y, -z],
        [cx + half_x, cy - half_y, -z],
        [cx + half_x, cy + half_y, -z],
        [cx - half_x, cy + half_y, -z],
    ])
    t = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    n = np.tile([0.0, 0.0, 1.0], (4, 1))
    return TriMesh(v, t, normals=n)


def _angular_bump(dirs: np.ndarray, anchor, sigma: float) -> np.ndarray:
    """Gaussian falloff in angle between unit direction vectors and anchor."""
    anchor = np.asarray(anchor, dtype=np.float64)
    anchor = anchor / np.linalg.norm(anchor)
    ang = np.arccos(np.clip(dirs @ anchor, -1.0, 1.0))
    return np.exp(-0.5 * (ang / sigma) ** 2)


def procedural_head(rings: int = 48, segments: int = 48) -> TriMesh:
    """Ellipsoid head with a nose and the four non-neutral expression
    morphs. Authored y-up, facing +z, centered on the origin; roughly
    life-sized (0.22 m tall)."""
    sphere = uv_sphere(radius=1.0, rings=rings, segments=segments)
    dirs = np.asarray(sphere.vertices)
    radii = np.array([0.075, 0.11, 0.09])
    base = dirs * radii

    # nose: outward bump on the +z face slightly below the midline
    nose_w = _angular_bump(dirs, (0.0, -0.15, 1.0), sigma=0.22)
    base = base + (0.018 * nose_w)[:, None] * dirs

    mouth_l = _angular_bump(dirs, (-0.35, -0.55, 1.0), sigma=0.25)
    mouth_r = _angular_bump(dirs, (0.35, -0.55, 1.0), sigma=0.25)
    mouth_c = _angular_bump(dirs, (0.0, -0.6, 1.0), sigma=0.3)
    brow = _angular_bump(dirs, (0.0, 0.45, 1.0), sigma=0.35)
    up = np.array([0.0, 1.0, 0.0])

    morphs = {
        # mouth corners pulled up and out
        "happy": 0.008 * ((mouth_l + mouth_r)[:, None] * (0.6 * up + 0.4 * dirs)),
        # mouth corners pulled down
        "sad": -0.008 * ((mouth_l + mouth_r)[:, None] * up),
        # furrowed brow: pulled inward and down
        "angry": -0.006 * (brow[:, None] * (0.5 * dirs + 0.5 * up)),
        # raised brow plus dropped jaw
        "scared": 0.007 * (brow[:, None] * up) - 0.009 * (mouth_c[:, None] * up),
    }
    head = TriMesh(base, sphere.triangles, morphs=morphs)
    return recompute_normals(head)


def checker_background(width: int = 480, height: int = 640, tile: int = 40,
                       bright=(96, 96, 120), dark=(40, 40, 56)) -> RgbImage:
    ys = (np.arange(height)[:, None] // tile) % 2
    xs = (np.arange(width)[None, :] // tile) % 2
    pattern = (ys + xs) % 2
    px = np.where(pattern[:, :, None] == 0,
                  np.asarray(bright, dtype=np.uint8),
                  np.asarray(dark, dtype=np.uint8))
    return RgbImage(px.astype(np.uint8))


def flat_background(width: int, height: int, color=(64, 64, 72)) -> RgbImage:
    px = np.tile(np.asarray(color, dtype=np.uint8), (height, width, 1))
    return RgbImage(px)
