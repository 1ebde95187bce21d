"""Indexed triangle meshes, Wavefront OBJ ingestion and morph-target expressions.

Head assets arrive as a base OBJ plus companion OBJ files with identical
vertex count, one per expression. Morph deltas are computed at load time as
(expression vertices - base vertices) and blended additively with weights
in [0, 1]. All mesh values are immutable after construction, so meshes can
be shared read-only across concurrent frame renders.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyMeshError, MeshParseError
from .transforms import RigidTransform

logger = logging.getLogger(__name__)

NORMAL_UNIT_TOL = 1e-6


def _freeze(a: np.ndarray, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with optional per-vertex normals and morphs.

    vertices   (N, 3) float64, meters
    triangles  (M, 3) int64, 0-based vertex indices
    normals    (N, 3) float64 unit vectors, or None when not yet computed
    morphs     expression name -> (N, 3) per-vertex displacement, meters
    uvs        (N, 2) per-vertex texture coordinates, carried through when
               the source OBJ indexes them in lockstep with vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = None
    morphs: dict[str, np.ndarray] = field(default_factory=dict)
    uvs: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ConfigError("vertices must have shape (N, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ConfigError("triangles must have shape (M, 3)")
        if not np.all(np.isfinite(v)):
            raise ConfigError("vertex coordinates must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ConfigError("triangle index out of range")
        object.__setattr__(self, "vertices", _freeze(v, np.float64))
        object.__setattr__(self, "triangles", _freeze(t, np.int64))
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64)
            if n.shape != v.shape:
                raise ConfigError("normals must match vertices in shape")
            if not np.all(np.isfinite(n)):
                raise ConfigError("normals must be finite")
            object.__setattr__(self, "normals", _freeze(n, np.float64))
        morphs = {}
        for name, delta in self.morphs.items():
            d = np.asarray(delta, dtype=np.float64)
            if d.shape != v.shape:
                raise ConfigError(
                    "morph %r has %d entries, mesh has %d vertices" % (name, len(d), len(v)))
            if not np.all(np.isfinite(d)):
                raise ConfigError("morph %r contains non-finite displacements" % name)
            morphs[name] = _freeze(d, np.float64)
        object.__setattr__(self, "morphs", morphs)
        if self.uvs is not None:
            uv = np.asarray(self.uvs, dtype=np.float64)
            if uv.ndim != 2 or uv.shape[0] != len(v) or uv.shape[1] != 2:
                raise ConfigError("uvs must have shape (N, 2)")
            object.__setattr__(self, "uvs", _freeze(uv, np.float64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def bbox_center(self) -> np.ndarray:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (lo + hi) / 2.0

    def with_morphs(self, morphs: dict[str, np.ndarray]) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles, self.normals, dict(morphs), self.uvs)


@dataclass(frozen=True)
class ExpressionWeights:
    """Named blend weights. Values are clamped into [0, 1] on construction;
    unknown expression names are rejected when applied to a mesh."""

    weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        clamped = {}
        for name, w in self.weights.items():
            w = float(w)
            if not np.isfinite(w):
                raise ConfigError("expression weight %r is not finite" % name)
            clamped[name] = min(1.0, max(0.0, w))
        object.__setattr__(self, "weights", clamped)

    @classmethod
    def neutral(cls) -> "ExpressionWeights":
        return cls({})


def parse_obj(source) -> TriMesh:
    """Parse a Wavefront OBJ byte or text stream into a TriMesh.

    Handles `v`, `vn`, `vt`, `f`, `o`, `g`, `s`, `mtllib`, `usemtl` and `#`
    records; any other directive is ignored. Polygonal faces with n vertices
    are fan-triangulated into n-2 triangles. Both 1-based and negative
    (relative) indices are resolved. Multiple `o`/`g` objects are merged
    into a single mesh.

    Per-vertex normals and texture coordinates are retained only when the
    file defines exactly one of them per vertex (the layout this package
    writes); otherwise they are dropped and normals can be recomputed.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    vertices: list[list[float]] = []
    normals: list[list[float]] = []
    uvs: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    # per-corner index triples (v, vt, vn), -1 when absent
    corner_vt: list[int] = []
    corner_vn: list[int] = []

    def parse_floats(parts, count, lineno, what):
        if len(parts) < count:
            raise MeshParseError("%s record needs %d components" % (what, count), lineno)
        try:
            return [float(p) for p in parts[:count]]
        except ValueError:
            raise MeshParseError("malformed numeric literal in %s record" % what, lineno)

    def resolve_index(raw, current_count, lineno):
        try:
            idx = int(raw)
        except ValueError:
            raise MeshParseError("malformed face index %r" % raw, lineno)
        if idx > 0:
            resolved = idx - 1
        elif idx < 0:
            resolved = current_count + idx
        else:
            raise MeshParseError("face index 0 is invalid (OBJ is 1-based)", lineno)
        if not 0 <= resolved < current_count:
            raise MeshParseError("face index %d out of range (have %d)" % (idx, current_count),
                                 lineno)
        return resolved

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            vertices.append(parse_floats(parts[1:], 3, lineno, "v"))
        elif tag == "vn":
            normals.append(parse_floats(parts[1:], 3, lineno, "vn"))
        elif tag == "vt":
            uvs.append(parse_floats(parts[1:], 2, lineno, "vt"))
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError("face needs at least 3 vertices", lineno)
            corners = []
            for spec in parts[1:]:
                fields = spec.split("/")
                vi = resolve_index(fields[0], len(vertices), lineno)
                ti = ni = -1
                if len(fields) > 1 and fields[1]:
                    ti = resolve_index(fields[1], len(uvs), lineno)
                if len(fields) > 2 and fields[2]:
                    ni = resolve_index(fields[2], len(normals), lineno)
                corners.append((vi, ti, ni))
            for k in range(2, len(corners)):
                for c in (corners[0], corners[k - 1], corners[k]):
                    corner_vt.append(c[1])
                    corner_vn.append(c[2])
                triangles.append((corners[0][0], corners[k - 1][0], corners[k][0]))
        elif tag in ("o", "g", "s", "mtllib", "usemtl"):
            continue
        else:
            logger.debug("ignoring OBJ directive %r at line %d", tag, lineno)

    if not triangles:
        raise EmptyMeshError("OBJ stream defines no faces")

    nverts = len(vertices)
    tri = np.asarray(triangles, dtype=np.int64)

    # Keep normals/uvs only when they map one-to-one onto vertices, i.e.
    # every face corner references the attribute slot equal to its vertex
    # slot. That is the layout serialize_obj emits.
    def aligned(per_corner, attr_count):
        if attr_count != nverts:
            return False
        arr = np.asarray(per_corner, dtype=np.int64)
        return bool(np.all(arr.reshape(-1, 3) == tri)) if arr.size else False

    keep_normals = normals and aligned(corner_vn, len(normals))
    keep_uvs = uvs and aligned(corner_vt, len(uvs))

    return TriMesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        triangles=tri,
        normals=np.asarray(normals, dtype=np.float64) if keep_normals else None,
        uvs=np.asarray(uvs, dtype=np.float64) if keep_uvs else None,
    )


def serialize_obj(mesh: TriMesh) -> str:
    """Serialize a TriMesh to OBJ text that parse_obj round-trips exactly
    (vertex order, index values and float bit patterns preserved)."""
    out = []
    for v in mesh.vertices:
        out.append("v %.17g %.17g %.17g" % (v[0], v[1], v[2]))
    if mesh.uvs is not None:
        for uv in mesh.uvs:
            out.append("vt %.17g %.17g" % (uv[0], uv[1]))
    if mesh.normals is not None:
        for n in mesh.normals:
            out.append("vn %.17g %.17g %.17g" % (n[0], n[1], n[2]))
    has_t = mesh.uvs is not None
    has_n = mesh.normals is not None
    for a, b, c in mesh.triangles + 1:
        if has_t and has_n:
            out.append("f %d/%d/%d %d/%d/%d %d/%d/%d" % (a, a, a, b, b, b, c, c, c))
        elif has_n:
            out.append("f %d//%d %d//%d %d//%d" % (a, a, b, b, c, c))
        elif has_t:
            out.append("f %d/%d %d/%d %d/%d" % (a, a, b, b, c, c))
        else:
            out.append("f %d %d %d" % (a, b, c))
    return "\n".join(out) + "\n"


def apply_expression(mesh: TriMesh, weights: ExpressionWeights) -> TriMesh:
    """Blend morph targets into the base vertices: v_i + sum_e w[e] * d_e[i].

    Topology and morphs are carried through unchanged; normals are
    recomputed whenever any weight is nonzero.
    """
    unknown = set(weights.weights) - set(mesh.morphs)
    if unknown:
        raise ConfigError("unknown expression name(s): %s" % ", ".join(sorted(unknown)))
    if not weights.weights or all(w == 0.0 for w in weights.weights.values()):
        return mesh
    out = mesh.vertices.copy()
    for name, w in weights.weights.items():
        if w != 0.0:
            out += w * mesh.morphs[name]
    blended = TriMesh(out, mesh.triangles, None, mesh.morphs, mesh.uvs)
    return recompute_normals(blended)


def transform_mesh(mesh: TriMesh, pose: RigidTransform) -> TriMesh:
    """Rigidly transform a mesh: vertices rotated then translated, normals
    and morph displacements rotated only."""
    verts = pose.apply(mesh.vertices)
    normals = pose.apply_vectors(mesh.normals) if mesh.normals is not None else None
    morphs = {name: pose.apply_vectors(d) for name, d in mesh.morphs.items()}
    return TriMesh(verts, mesh.triangles, normals, morphs, mesh.uvs)


def recompute_normals(mesh: TriMesh) -> TriMesh:
    """Per-vertex normals as the normalized area-weighted sum of incident
    face normals. Degenerate faces contribute nothing; vertices with no
    incident area keep a zero normal."""
    if mesh.n_triangles < 1:
        raise ConfigError("cannot compute normals for a mesh without triangles")
    v = mesh.vertices
    t = mesh.triangles
    # cross product of edge vectors has magnitude 2*area, direction = face normal
    face_n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, t[:, k], face_n)
    lengths = np.linalg.norm(acc, axis=1)
    nonzero = lengths > 0.0
    out = np.zeros_like(acc)
    out[nonzero] = acc[nonzero] / lengths[nonzero, None]
    n_flat = int(np.count_nonzero(~nonzero))
    if n_flat:
        logger.debug("%d vertices have no incident face area; normals left zero", n_flat)
    return TriMesh(v, t, out, mesh.morphs, mesh.uvs)


def read_morph_manifest(path) -> dict[str, str]:
    """Read the expression manifest: one `name = relative/path.obj` per line,
    `#` comments and blank lines ignored."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("morph manifest line %d: expected 'name = path'" % lineno)
            name, rel = (s.strip() for s in line.split("=", 1))
            if not name or not rel:
                raise ConfigError("morph manifest line %d: empty name or path" % lineno)
            mapping[name] = rel
    return mapping


def load_mesh_with_morphs(base_path, manifest_path=None) -> TriMesh:
    """Load a base head OBJ and, when a manifest is given, its expression
    OBJs. Each expression mesh must match the base vertex count; its morph
    delta is (expression vertices - base vertices)."""
    import os

    with open(base_path, "rb") as fh:
        base = parse_obj(fh)
    if base.normals is None:
        base = recompute_normals(base)
    if manifest_path is None:
        return base
    mapping = read_morph_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    morphs = {}
    for name, rel in mapping.items():
        full = rel if os.path.isabs(rel) else os.path.join(root, rel)
        with open(full, "rb") as fh:
            expr = parse_obj(fh)
        if expr.n_vertices != base.n_vertices:
            raise ConfigError(
                "expression %r has %d vertices, base has %d"
                % (name, expr.n_vertices, base.n_vertices))
        morphs[name] = expr.vertices - base.vertices
    return base.with_morphs(morphs)
