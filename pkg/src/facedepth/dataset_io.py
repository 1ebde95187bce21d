"""Dataset persistence: PNG encoding, frame records and the JSONL manifest.

On-disk layout of a dataset directory:

    rgb/000000.png     8-bit RGB
    depth/000000.png   16-bit grayscale, value = round(depth_m * scale), 0 = invalid
    depth_f32/000000.npy   optional float32 sidecar (meters), when enabled
    manifest.jsonl     one JSON object per line; first line is the header

Depth quantization at the default scale (10000 units per meter) is 0.1 mm;
valid pixels are clamped to >= 1 so no real depth ever aliases the invalid
sentinel. Frame files are written atomically (temp file + rename) and a
record enters the manifest only after its files exist.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image

from .errors import ConfigError, DepthEncodingError
from .render import DepthMap, FramePacket, RgbImage

MANIFEST_NAME = "manifest.jsonl"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class DepthEncoding:
    """16-bit fixed-point depth encoding: units per meter, 0 = invalid."""

    scale: float = 10000.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("depth encoding scale must be positive")

    @property
    def max_depth_m(self) -> float:
        return 65535.0 / self.scale

    def to_dict(self) -> dict:
        return {"scale": self.scale, "invalid": 0}

    @classmethod
    def from_dict(cls, d: dict) -> "DepthEncoding":
        return cls(scale=float(d.get("scale", 10000.0)))


def encode_depth16(depth: DepthMap, enc: DepthEncoding) -> np.ndarray:
    """Quantize metric depth to uint16. Valid pixels map to
    max(1, round(depth * scale)); invalid pixels stay 0."""
    d = depth.values
    valid = d > 0.0
    q = np.rint(d * enc.scale)
    over = valid & (q > 65535)
    if over.any():
        r, c = np.argwhere(over)[0]
        raise DepthEncodingError(
            "depth %.6f m at pixel (row=%d, col=%d) overflows 16 bits at scale %g"
            % (d[r, c], r, c, enc.scale))
    out = np.where(valid, np.maximum(q, 1.0), 0.0)
    return out.astype(np.uint16)


def decode_depth16(img: np.ndarray, enc: DepthEncoding) -> DepthMap:
    """Inverse of encode_depth16: 0 stays invalid, v > 0 becomes v / scale
    meters. encode(decode(x)) is the identity on stored integers."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.dtype != np.uint16:
        raise DepthEncodingError("expected a single-channel 16-bit image, got %s %s"
                                 % (arr.dtype, arr.shape))
    return DepthMap(arr.astype(np.float64) / enc.scale)


def write_rgb_png(path, image: RgbImage) -> None:
    _atomic_save(path, Image.fromarray(image.pixels, mode="RGB"))


def write_depth_png(path, encoded: np.ndarray) -> None:
    if encoded.dtype != np.uint16 or encoded.ndim != 2:
        raise DepthEncodingError("depth PNG payload must be 2-D uint16")
    _atomic_save(path, Image.fromarray(encoded))


def _atomic_save(path, image: Image.Image) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp-%d" % os.getpid())
    image.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_rgb_png(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def read_depth_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I"):
            raise DepthEncodingError("%s: expected 16-bit grayscale PNG, got mode %s"
                                     % (path, im.mode))
        arr = np.asarray(im)
    if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
        raise DepthEncodingError("%s: pixel values exceed 16-bit range" % path)
    return arr.astype(np.uint16)


@dataclass(frozen=True)
class FrameRecord:
    """One manifest line: file paths plus the generation metadata."""

    frame_index: int
    rgb_path: str
    depth_path: str
    camera_distance_m: float
    yaw_deg: float
    pitch_deg: float
    roll_deg: float
    rotation: tuple            # 3x3, row-major nested tuples; authoritative pose
    translation_m: tuple
    light_direction: tuple
    light_position_m: tuple
    expression: dict = field(default_factory=dict)
    seed: int = 0
    intrinsics: dict = field(default_factory=dict)

    def __post_init__(self):
        ld = np.asarray(self.light_direction, dtype=np.float64)
        if abs(np.linalg.norm(ld) - 1.0) > 1e-6:
            raise ConfigError("light_direction must be unit length")

    def to_json(self) -> str:
        payload = {
            "type": "frame",
            "frame_index": self.frame_index,
            "rgb": self.rgb_path,
            "depth": self.depth_path,
            "camera_distance_m": self.camera_distance_m,
            "yaw_deg": self.yaw_deg,
            "pitch_deg": self.pitch_deg,
            "roll_deg": self.roll_deg,
            "rotation": [list(row) for row in self.rotation],
            "translation_m": list(self.translation_m),
            "light_direction": list(self.light_direction),
            "light_position_m": list(self.light_position_m),
            "expression": self.expression,
            "seed": self.seed,
            "intrinsics": self.intrinsics,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, d: dict) -> "FrameRecord":
        return cls(
            frame_index=int(d["frame_index"]),
            rgb_path=d["rgb"],
            depth_path=d["depth"],
            camera_distance_m=float(d["camera_distance_m"]),
            yaw_deg=float(d["yaw_deg"]),
            pitch_deg=float(d["pitch_deg"]),
            roll_deg=float(d["roll_deg"]),
            rotation=tuple(tuple(row) for row in d["rotation"]),
            translation_m=tuple(d["translation_m"]),
            light_direction=tuple(d["light_direction"]),
            light_position_m=tuple(d["light_position_m"]),
            expression=dict(d["expression"]),
            seed=int(d["seed"]),
            intrinsics=dict(d["intrinsics"]),
        )


def frame_record_from_packet(packet: FramePacket, frame_index: int) -> FrameRecord:
    """Build the manifest record for a rendered packet (meta required)."""
    meta = packet.meta
    if meta is None:
        raise ConfigError("frame packet carries no metadata")
    s = meta.sample
    return FrameRecord(
        frame_index=frame_index,
        rgb_path="rgb/%06d.png" % frame_index,
        depth_path="depth/%06d.png" % frame_index,
        camera_distance_m=s.camera_distance,
        yaw_deg=s.yaw_deg,
        pitch_deg=s.pitch_deg,
        roll_deg=s.roll_deg,
        rotation=tuple(tuple(x) for x in s.head_pose.rotation.tolist()),
        translation_m=tuple(s.head_pose.translation.tolist()),
        light_direction=tuple(np.asarray(meta.light_direction).tolist()),
        light_position_m=tuple(s.light.position.tolist()),
        expression=dict(s.expression.weights),
        seed=s.seed,
        intrinsics={"fx": meta.intrinsics.fx, "fy": meta.intrinsics.fy,
                    "cx": meta.intrinsics.cx, "cy": meta.intrinsics.cy},
    )


def make_header(enc: DepthEncoding, extra: dict | None = None) -> dict:
    header = {
        "type": "header",
        "format_version": FORMAT_VERSION,
        "generator": "facedepth",
        "depth_encoding": enc.to_dict(),
    }
    if extra:
        header.update(extra)
    return header


def write_frame_files(packet: FramePacket, out_dir, enc: DepthEncoding,
                      frame_index: int, float_sidecar: bool = False) -> FrameRecord:
    """Write one frame's images atomically and return its record."""
    out = Path(out_dir)
    record = frame_record_from_packet(packet, frame_index)
    write_rgb_png(out / record.rgb_path, packet.rgb)
    write_depth_png(out / record.depth_path, encode_depth16(packet.depth, enc))
    if float_sidecar:
        side = out / "depth_f32" / ("%06d.npy" % frame_index)
        tmp = side.with_name("%06d.tmp-%d.npy" % (frame_index, os.getpid()))
        with open(tmp, "wb") as fh:
            np.save(fh, packet.depth.values.astype(np.float32))
        os.replace(tmp, side)
    return record


def prepare_dataset_dir(out_dir, float_sidecar: bool = False) -> Path:
    out = Path(out_dir)
    (out / "rgb").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    if float_sidecar:
        (out / "depth_f32").mkdir(parents=True, exist_ok=True)
    return out


def write_dataset(frames: Iterable[FramePacket], out_dir, enc: DepthEncoding,
                  header_extra: dict | None = None,
                  float_sidecar: bool = False) -> list[FrameRecord]:
    """Consume a stream of packets, writing files and appending manifest
    records as each frame completes. Partial frames never reach the
    manifest."""
    out = prepare_dataset_dir(out_dir, float_sidecar)
    records = []
    manifest = out / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(make_header(enc, header_extra),
                            sort_keys=True, separators=(",", ":")) + "\n")
        for i, packet in enumerate(frames):
            rec = write_frame_files(packet, out, enc, i, float_sidecar)
            fh.write(rec.to_json() + "\n")
            fh.flush()
            records.append(rec)
    return records


def write_manifest(out_dir, enc: DepthEncoding, records: Iterable[FrameRecord],
                   header_extra: dict | None = None) -> Path:
    """Write a complete manifest in frame order (used by parallel writers
    after all frame files exist)."""
    out = Path(out_dir)
    manifest = out / MANIFEST_NAME
    tmp = manifest.with_name(manifest.name + ".tmp-%d" % os.getpid())
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(make_header(enc, header_extra),
                            sort_keys=True, separators=(",", ":")) + "\n")
        for rec in sorted(records, key=lambda r: r.frame_index):
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, manifest)
    return manifest


def read_manifest(dataset_dir) -> tuple[dict, list[FrameRecord]]:
    """Load the manifest of a dataset directory (or a direct manifest path)."""
    path = Path(dataset_dir)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError("no manifest found at %s" % path)
    header = None
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                if header is not None:
                    raise ConfigError("%s: duplicate header at line %d" % (path, lineno))
                header = obj
            elif obj.get("type") == "frame":
                records.append(FrameRecord.from_json_dict(obj))
            else:
                raise ConfigError("%s: unknown record type at line %d" % (path, lineno))
    if header is None:
        raise ConfigError("%s: missing header line" % path)
    records.sort(key=lambda r: r.frame_index)
    return header, records


def load_depth(dataset_dir, record: FrameRecord, enc: DepthEncoding) -> DepthMap:
    return decode_depth16(read_depth_png(Path(dataset_dir) / record.depth_path), enc)


def iter_dataset_depths(dataset_dir) -> Iterator[tuple[int, DepthMap]]:
    """Yield (frame_index, depth) for every record in a dataset directory."""
    header, records = read_manifest(dataset_dir)
    enc = DepthEncoding.from_dict(header.get("depth_encoding", {}))
    for rec in records:
        yield rec.frame_index, load_depth(dataset_dir, rec, enc)
