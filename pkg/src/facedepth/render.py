"""Deterministic software rasterizer producing RGB + metric z-depth frames.

Depth semantics: per-pixel values are the planar distance along the camera
optical axis (not ray length), interpolated perspective-correctly. Depth is
interpolated in the delta form z0 + b1*(z1-z0) + b2*(z2-z0) with
perspective-corrected barycentrics, so a surface of constant camera-space
depth lands in the float buffer bit-exactly.

Coverage uses pixel-center sampling with a top-left style fill rule: a
pixel center lying exactly on a shared edge is owned by exactly one of the
two adjacent triangles. Depth ties keep the earlier-submitted triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .mesh import TriMesh, apply_expression, recompute_normals, transform_mesh
from .scene import (CameraRig, Intrinsics, PointLight, SceneSample,
                    intrinsics, light_direction)
from .transforms import RigidTransform

DEPTH_INVALID = 0.0
DEFAULT_ALBEDO = (0.75, 0.75, 0.75)
DEFAULT_AMBIENT = 0.15


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DepthMap:
    """Dense per-pixel metric depth in meters; 0.0 marks invalid pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError("depth map must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ConfigError("depth map contains NaN/Inf")
        if np.any(v < 0.0):
            raise ConfigError("depth map contains negative values")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0.0


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image, row-major (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ShapeError("rgb image must be (H, W, 3) uint8")
        object.__setattr__(self, "pixels", _freeze(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FrameMeta:
    sample: SceneSample
    light_direction: np.ndarray
    intrinsics: Intrinsics


@dataclass(frozen=True)
class FramePacket:
    """One rendered sample: RGB, metric depth, face-coverage mask, metadata."""

    rgb: RgbImage
    depth: DepthMap
    mask: np.ndarray
    meta: FrameMeta | None = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=bool)
        if m.shape != self.depth.values.shape:
            raise ShapeError("mask and depth dimensions differ")
        if (self.rgb.height, self.rgb.width) != m.shape:
            raise ShapeError("rgb and mask dimensions differ")
        if not np.array_equal(m, self.depth.valid):
            raise ConfigError("mask must be true exactly where depth is valid")
        object.__setattr__(self, "mask", _freeze(m))


def _shade(points, normals, light: PointLight, ambient: float, albedo) -> np.ndarray:
    """Lambert + inverse-square falloff + ambient floor, clamped to [0, 1]."""
    to_light = light.position[None, :] - points
    dist2 = np.einsum("ij,ij->i", to_light, to_light)
    dist = np.sqrt(dist2)
    lam = np.einsum("ij,ij->i", normals, to_light) / np.where(dist > 0, dist, 1.0)
    lam = np.maximum(lam, 0.0)
    radiance = ambient + light.intensity * lam / np.where(dist2 > 0, dist2, 1.0)
    rgb = np.asarray(albedo)[None, :] * np.asarray(light.color)[None, :] * radiance[:, None]
    return np.clip(rgb, 0.0, 1.0)


def _clip_near(cam_pts, attrs, near):
    """Sutherland-Hodgman clip of one polygon against depth >= near.

    cam_pts: (k, 3) camera-space positions; attrs: list of (k, d) arrays
    interpolated linearly alongside. Returns (pts, attrs) with 0..k+1 rows.
    """
    out_pts = []
    out_attrs = [[] for _ in attrs]
    k = len(cam_pts)
    for i in range(k):
        a, b = cam_pts[i], cam_pts[(i + 1) % k]
        da, db = -a[2], -b[2]
        a_in, b_in = da >= near, db >= near
        if a_in:
            out_pts.append(a)
            for lst, attr in zip(out_attrs, attrs):
                lst.append(attr[i])
        if a_in != b_in:
            t = (near - da) / (db - da)
            out_pts.append(a + t * (b - a))
            for lst, attr in zip(out_attrs, attrs):
                lst.append(attr[i] + t * (attr[(i + 1) % k] - attr[i]))
    if len(out_pts) < 3:
        return None, None
    return np.asarray(out_pts), [np.asarray(lst) for lst in out_attrs]


class _FrameBuffers:
    def __init__(self, width, height):
        self.zbuf = np.full((height, width), np.inf)
        self.rgb = np.zeros((height, width, 3))
        self.mask = np.zeros((height, width), dtype=bool)


def _raster_triangle(buf: _FrameBuffers, uv, z, world_pos, world_nrm,
                     near, far, light, ambient, albedo):
    """Rasterize one screen triangle. uv (3,2), z (3,) positive depth."""
    (x0, y0), (x1, y1), (x2, y2) = uv
    area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area2 == 0.0:
        return
    if area2 < 0.0:
        uv = uv[[0, 2, 1]]
        z = z[[0, 2, 1]]
        world_pos = world_pos[[0, 2, 1]]
        world_nrm = world_nrm[[0, 2, 1]]
        (x0, y0), (x1, y1), (x2, y2) = uv

    H, W = buf.zbuf.shape
    xmin = max(0, int(np.ceil(min(x0, x1, x2) - 0.5)))
    xmax = min(W - 1, int(np.floor(max(x0, x1, x2) - 0.5)))
    ymin = max(0, int(np.ceil(min(y0, y1, y2) - 0.5)))
    ymax = min(H - 1, int(np.floor(max(y0, y1, y2) - 0.5)))
    if xmin > xmax or ymin > ymax:
        return

    px = np.arange(xmin, xmax + 1) + 0.5
    py = (np.arange(ymin, ymax + 1) + 0.5)[:, None]

    def edge(xa, ya, xb, yb):
        e = (xb - xa) * (py - ya) - (yb - ya) * (px - xa)
        # boundary ownership: edges heading up (y shrinking) or exactly
        # horizontal heading right own their pixels; the adjacent triangle
        # sees the opposite direction and declines them
        dy, dx = yb - ya, xb - xa
        own = dy < 0.0 or (dy == 0.0 and dx > 0.0)
        return e, own

    e01, own01 = edge(x0, y0, x1, y1)
    e12, own12 = edge(x1, y1, x2, y2)
    e20, own20 = edge(x2, y2, x0, y0)

    covered = (((e01 > 0) | ((e01 == 0) & own01))
               & ((e12 > 0) | ((e12 == 0) & own12))
               & ((e20 > 0) | ((e20 == 0) & own20)))
    if not covered.any():
        return

    rows, cols = np.nonzero(covered)
    lam0 = e12[rows, cols]
    lam1 = e20[rows, cols]
    lam2 = e01[rows, cols]
    # perspective-corrected barycentrics
    q0 = lam0 / z[0]
    q1 = lam1 / z[1]
    q2 = lam2 / z[2]
    qs = q0 + q1 + q2
    b1 = q1 / qs
    b2 = q2 / qs
    depth = z[0] + b1 * (z[1] - z[0]) + b2 * (z[2] - z[0])

    yy = rows + ymin
    xx = cols + xmin
    win = (depth > near) & (depth <= far) & (depth < buf.zbuf[yy, xx])
    if not win.any():
        return
    yy, xx = yy[win], xx[win]
    b1, b2, depth = b1[win], b2[win], depth[win]

    pos = world_pos[0] + b1[:, None] * (world_pos[1] - world_pos[0]) \
        + b2[:, None] * (world_pos[2] - world_pos[0])
    nrm = world_nrm[0] + b1[:, None] * (world_nrm[1] - world_nrm[0]) \
        + b2[:, None] * (world_nrm[2] - world_nrm[0])
    nlen = np.linalg.norm(nrm, axis=1)
    nz = nlen > 0
    nrm[nz] /= nlen[nz, None]

    buf.zbuf[yy, xx] = depth
    buf.rgb[yy, xx] = _shade(pos, nrm, light, ambient, albedo)
    buf.mask[yy, xx] = True


def rasterize(mesh: TriMesh, cam: CameraRig, light: PointLight,
              ambient: float = DEFAULT_AMBIENT, albedo=DEFAULT_ALBEDO) -> FramePacket:
    """Render a world-space mesh into an RGB + depth frame (no background).

    Triangles are near-clipped in camera space before projection, far
    fragments are discarded per pixel, and the depth test keeps the
    strictly smaller depth with ties resolved to the earlier triangle.
    """
    if mesh.n_triangles < 1:
        raise ConfigError("cannot rasterize an empty mesh")
    if mesh.normals is None:
        mesh = recompute_normals(mesh)
    intr = intrinsics(cam)
    near, far = cam.near_clip_m, cam.far_clip_m
    W, H = cam.width_px, cam.height_px

    cam_pts = cam.pose.inverse().apply(mesh.vertices)
    depth_all = -cam_pts[:, 2]
    front = depth_all >= near
    safe = np.where(depth_all > 0, depth_all, 1.0)
    u_all = intr.cx + intr.fx * cam_pts[:, 0] / safe
    v_all = intr.cy + intr.fy * cam_pts[:, 1] / safe

    tris = mesh.triangles
    tri_front = front[tris]
    buf = _FrameBuffers(W, H)

    # precull fully-visible triangles entirely outside the frame
    all_front = tri_front.all(axis=1)
    tu = u_all[tris]
    tv = v_all[tris]
    offscreen = ((tu.max(axis=1) < 0.5) | (tu.min(axis=1) > W - 0.5)
                 | (tv.max(axis=1) < 0.5) | (tv.min(axis=1) > H - 0.5))
    skip = all_front & offscreen

    for i in range(len(tris)):
        if skip[i]:
            continue
        idx = tris[i]
        nf = tri_front[i]
        if all_front[i]:
            uv = np.column_stack([tu[i], tv[i]])
            _raster_triangle(buf, uv, depth_all[idx], mesh.vertices[idx],
                             mesh.normals[idx], near, far, light, ambient, albedo)
            continue
        if not nf.any():
            continue
        clipped, attrs = _clip_near(cam_pts[idx],
                                    [mesh.vertices[idx], mesh.normals[idx]], near)
        if clipped is None:
            continue
        wpos, wnrm = attrs
        cz = -clipped[:, 2]
        cu = intr.cx + intr.fx * clipped[:, 0] / cz
        cv = intr.cy + intr.fy * clipped[:, 1] / cz
        for k in range(2, len(clipped)):
            pick = [0, k - 1, k]
            uv = np.column_stack([cu[pick], cv[pick]])
            _raster_triangle(buf, uv, cz[pick], wpos[pick], wnrm[pick],
                             near, far, light, ambient, albedo)

    depth_out = np.where(buf.mask, buf.zbuf, DEPTH_INVALID)
    rgb_out = np.clip(np.rint(buf.rgb * 255.0), 0, 255).astype(np.uint8)
    return FramePacket(rgb=RgbImage(rgb_out), depth=DepthMap(depth_out), mask=buf.mask)


def _rescale_nearest(img: RgbImage, width: int, height: int) -> RgbImage:
    src = img.pixels
    ys = (np.arange(height) * src.shape[0]) // height
    xs = (np.arange(width) * src.shape[1]) // width
    return RgbImage(src[ys[:, None], xs[None, :]])


def composite_background(frame: FramePacket, background: RgbImage,
                         allow_rescale: bool = False) -> FramePacket:
    """Fill non-face pixels with the static background image. Depth stays
    invalid on background pixels."""
    H, W = frame.depth.values.shape
    if (background.height, background.width) != (H, W):
        if not allow_rescale:
            raise ConfigError("background is %dx%d, frame is %dx%d"
                              % (background.width, background.height, W, H))
        background = _rescale_nearest(background, W, H)
    rgb = np.where(frame.mask[:, :, None], frame.rgb.pixels, background.pixels)
    return FramePacket(rgb=RgbImage(rgb), depth=frame.depth,
                       mask=frame.mask, meta=frame.meta)


def render_frame(mesh: TriMesh, sample: SceneSample, cam: CameraRig,
                 background: RgbImage | None = None,
                 ambient: float = DEFAULT_AMBIENT, albedo=DEFAULT_ALBEDO,
                 allow_rescale: bool = True) -> FramePacket:
    """Full per-frame pipeline: expression, pose, rasterize, composite.

    The expressed mesh is recentered on its bounding-box center before the
    head pose is applied, so the sampled camera distance measures
    camera-to-head-center regardless of how the asset was authored. Pure
    function of its inputs; identical inputs give bit-identical packets.
    """
    expressed = apply_expression(mesh, sample.expression)
    if expressed.normals is None:
        expressed = recompute_normals(expressed)
    center = expressed.bbox_center()
    recentered = transform_mesh(expressed, RigidTransform(np.eye(3), -center))
    posed = transform_mesh(recentered, sample.head_pose)
    packet = rasterize(posed, cam, sample.light, ambient=ambient, albedo=albedo)
    if background is not None:
        packet = composite_background(packet, background, allow_rescale=allow_rescale)
    meta = FrameMeta(sample=sample,
                     light_direction=light_direction(sample, sample.head_pose.translation),
                     intrinsics=intrinsics(cam))
    return FramePacket(rgb=packet.rgb, depth=packet.depth, mask=packet.mask, meta=meta)


def colorize_depth(depth: DepthMap, near: float, far: float) -> RgbImage:
    """Gray-scale visualization: near = bright, far = dark, invalid = black."""
    d = depth.values
    valid = d > 0.0
    scaled = np.zeros_like(d)
    scaled[valid] = 1.0 + 254.0 * (far - np.clip(d[valid], near, far)) / (far - near)
    gray = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    return RgbImage(np.repeat(gray[:, :, None], 3, axis=2))
