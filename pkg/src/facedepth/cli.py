"""Command-line entry point: render sweeps, evaluate predictions, preview.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration failure.
Progress and summaries go to stderr; stdout carries only the metric table
(eval) so it can be piped.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import (DepthEncoding, decode_depth16, encode_depth16, load_depth,
                         prepare_dataset_dir, read_depth_png, read_manifest,
                         read_rgb_png, write_depth_png, write_frame_files,
                         write_manifest, write_rgb_png)
from .errors import ConfigError, FaceDepthError
from .mesh import load_mesh_with_morphs
from .metrics import (ALIGN_MODES, ALIGN_NONE, aggregate_report, align_prediction,
                      compute_metrics, format_table, report_to_dict, valid_mask)
from .render import colorize_depth, render_frame
from .scene import NEUTRAL, CameraRig, SweepConfig, sample_scene
from .synth import flat_background


@dataclass
class RunConfig:
    """Everything a render run needs, loadable from a JSON config file.
    Ranges use the config-file units (millimeters / degrees)."""

    mesh_path: str
    output_dir: str = "dataset"
    morphs_path: str | None = None
    background_path: str | None = None
    background_color: tuple = (64, 64, 72)
    frame_count: int = 10
    seed: int = 0
    workers: int = 1
    camera: CameraRig = field(default_factory=CameraRig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    albedo: tuple = (0.75, 0.75, 0.75)
    encoding: DepthEncoding = field(default_factory=DepthEncoding)
    float_sidecar: bool = False

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as e:
            raise ConfigError("cannot read config %s: %s" % (path, e))
        except json.JSONDecodeError as e:
            raise ConfigError("config %s is not valid JSON: %s" % (path, e))
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        if overrides:
            raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
        try:
            cfg = cls(
                mesh_path=raw["mesh"],
                output_dir=raw.get("output_dir", "dataset"),
                morphs_path=raw.get("morphs"),
                background_path=raw.get("background"),
                background_color=tuple(raw.get("background_color", (64, 64, 72))),
                frame_count=int(raw.get("frame_count", 10)),
                seed=int(raw.get("seed", 0)),
                workers=int(raw.get("workers", 1)),
                camera=CameraRig.from_dict(raw.get("camera", {})),
                sweep=SweepConfig.from_dict(raw.get("sweep", {})),
                albedo=tuple(float(x) for x in raw.get("albedo", (0.75, 0.75, 0.75))),
                encoding=DepthEncoding.from_dict(raw.get("depth_encoding", {})),
                float_sidecar=bool(raw.get("float_sidecar", False)),
            )
        except KeyError as e:
            raise ConfigError("config is missing required field %s" % e)
        except (TypeError, ValueError) as e:
            raise ConfigError("config field has wrong type: %s" % e)
        cfg.validate()
        return cfg

    def validate(self):
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not Path(self.mesh_path).is_file():
            raise ConfigError("mesh: no such file: %s" % self.mesh_path)
        if self.morphs_path is not None and not Path(self.morphs_path).is_file():
            raise ConfigError("morphs: no such file: %s" % self.morphs_path)
        if self.background_path is not None and not Path(self.background_path).is_file():
            raise ConfigError("background: no such file: %s" % self.background_path)
        if len(self.albedo) != 3 or any(not 0.0 <= a <= 1.0 for a in self.albedo):
            raise ConfigError("albedo must be three components in [0, 1]")
        if self.encoding.scale * self.camera.far_clip_m > 65535:
            raise ConfigError(
                "depth_encoding.scale %g cannot represent far clip %g m in 16 bits"
                % (self.encoding.scale, self.camera.far_clip_m))

    def effective_dict(self) -> dict:
        # workers is an execution detail with no effect on rendered content;
        # leaving it out keeps manifests identical across worker counts
        return {
            "mesh": self.mesh_path,
            "morphs": self.morphs_path,
            "background": self.background_path,
            "background_color": list(self.background_color),
            "output_dir": self.output_dir,
            "frame_count": self.frame_count,
            "seed": self.seed,
            "camera": self.camera.to_dict(),
            "sweep": self.sweep.to_dict(),
            "albedo": list(self.albedo),
            "depth_encoding": self.encoding.to_dict(),
            "float_sidecar": self.float_sidecar,
        }


def _load_assets(cfg: RunConfig):
    mesh = load_mesh_with_morphs(cfg.mesh_path, cfg.morphs_path)
    missing = [e for e in cfg.sweep.expressions if e != NEUTRAL and e not in mesh.morphs]
    if missing:
        raise ConfigError("sweep.expressions not found in morph manifest: %s"
                          % ", ".join(missing))
    if cfg.background_path is not None:
        background = read_rgb_png(cfg.background_path)
    else:
        background = flat_background(cfg.camera.width_px, cfg.camera.height_px,
                                     cfg.background_color)
    return mesh, background


# worker-process state, installed once per process by the pool initializer
_W: dict = {}


def _init_worker(state: dict):
    _W.update(state)


def _render_one(index: int):
    sample = sample_scene(_W["sweep"], index, _W["seed"])
    packet = render_frame(_W["mesh"], sample, _W["camera"], _W["background"],
                          ambient=_W["sweep"].ambient, albedo=_W["albedo"])
    rec = write_frame_files(packet, _W["out"], _W["enc"], index, _W["sidecar"])
    return rec, int(np.count_nonzero(packet.mask))


def cmd_render(args) -> int:
    overrides = {"frame_count": args.frames, "seed": args.seed,
                 "output_dir": args.out, "workers": args.workers}
    cfg = RunConfig.from_file(args.config, overrides)
    mesh, background = _load_assets(cfg)

    t0 = time.perf_counter()
    out = prepare_dataset_dir(cfg.output_dir, cfg.float_sidecar)
    state = {"sweep": cfg.sweep, "seed": cfg.seed, "mesh": mesh,
             "camera": cfg.camera, "background": background, "albedo": cfg.albedo,
             "out": out, "enc": cfg.encoding, "sidecar": cfg.float_sidecar}

    records = []
    valid_px = 0
    if cfg.workers == 1:
        _init_worker(state)
        for i in range(cfg.frame_count):
            try:
                rec, n_valid = _render_one(i)
            except FaceDepthError as e:
                print("render failed at frame %d: %s" % (i, e), file=sys.stderr)
                return 1
            records.append(rec)
            valid_px += n_valid
            print("frame %06d done" % i, file=sys.stderr)
    else:
        ctx = get_context("fork")
        with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx,
                                 initializer=_init_worker, initargs=(state,)) as pool:
            futures = {pool.submit(_render_one, i): i for i in range(cfg.frame_count)}
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    rec, n_valid = fut.result()
                except FaceDepthError as e:
                    print("render failed at frame %d: %s" % (i, e), file=sys.stderr)
                    return 1
                records.append(rec)
                valid_px += n_valid
                print("frame %06d done" % i, file=sys.stderr)

    write_manifest(out, cfg.encoding, records,
                   header_extra={"seed": cfg.seed, "frame_count": cfg.frame_count,
                                 "camera": cfg.camera.to_dict(),
                                 "config": cfg.effective_dict(),
                                 "version": __version__})
    dt = time.perf_counter() - t0
    per_frame = valid_px / max(len(records), 1)
    print("rendered %d frames to %s in %.1f s (mean %.0f valid depth px/frame)"
          % (len(records), out, dt, per_frame), file=sys.stderr)
    return 0


def _find_prediction(pred_dir: Path, index: int):
    stem = "%06d" % index
    for rel in ("depth/%s.png" % stem, "%s.png" % stem,
                "depth_f32/%s.npy" % stem, "%s.npy" % stem):
        p = pred_dir / rel
        if p.is_file():
            return p
    return None


def _load_prediction(path: Path, enc: DepthEncoding) -> np.ndarray:
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim != 2:
            raise ConfigError("%s: prediction array must be 2-D" % path)
        return np.asarray(arr, dtype=np.float64)
    return decode_depth16(read_depth_png(path), enc).values


def cmd_eval(args) -> int:
    gt_dir = Path(args.gt)
    pred_dir = Path(args.pred)
    header, records = read_manifest(gt_dir)
    enc = DepthEncoding.from_dict(header.get("depth_encoding", {}))
    cam_meta = header.get("camera", {})
    near = cam_meta.get("near_clip_m")
    far = cam_meta.get("far_clip_m")

    matches = [(rec, _find_prediction(pred_dir, rec.frame_index)) for rec in records]
    missing = [rec.frame_index for rec, p in matches if p is None]
    if len(missing) == len(records):
        print("no prediction matches any ground-truth frame in %s" % pred_dir,
              file=sys.stderr)
        return 2
    if missing and not args.skip_missing:
        print("missing predictions for frames: %s (use --skip-missing to ignore)"
              % ", ".join("%d" % i for i in missing), file=sys.stderr)
        return 2

    per_frame = []
    skipped = list(missing)
    for rec, pred_path in matches:
        if pred_path is None:
            continue
        gt = load_depth(gt_dir, rec, enc)
        try:
            pred = _load_prediction(pred_path, enc)
        except (FaceDepthError, OSError, ValueError) as e:
            if args.skip_missing:
                print("skipping unreadable prediction %s: %s" % (pred_path, e),
                      file=sys.stderr)
                skipped.append(rec.frame_index)
                continue
            print("unreadable prediction %s: %s" % (pred_path, e), file=sys.stderr)
            return 1
        pre_mask = valid_mask(gt, pred, near, far)
        if not pre_mask.any():
            print("frame %d has no valid pixels; skipped" % rec.frame_index,
                  file=sys.stderr)
            skipped.append(rec.frame_index)
            continue
        aligned = align_prediction(gt, pred, pre_mask, args.align)
        mask = valid_mask(gt, aligned, near, far)
        per_frame.append((rec.frame_index,
                          compute_metrics(gt, aligned, mask, alignment=args.align)))

    if not per_frame:
        print("nothing to evaluate: all frames skipped", file=sys.stderr)
        return 2
    reports = [r for _, r in per_frame]
    weights = [1.0] * len(reports) if args.frame_average else None
    total = aggregate_report(reports, weights)

    name = args.name or pred_dir.name
    table = format_table([(name, total)])
    print(table)
    if skipped:
        print("skipped frames: %s" % ", ".join("%d" % i for i in sorted(skipped)),
              file=sys.stderr)
    print("evaluated %d frames, %d pixels" % (len(per_frame), total.valid_pixel_count),
          file=sys.stderr)

    if args.report:
        Path(args.report).write_text(table + "\n", encoding="utf-8")
    if args.report_json:
        payload = {
            "method": name,
            "alignment": args.align,
            "aggregation": "frame-average" if args.frame_average else "pixel-weighted",
            "aggregate": report_to_dict(total),
            "frames": [{"frame_index": i, **report_to_dict(r)} for i, r in per_frame],
            "skipped_frames": sorted(skipped),
        }
        Path(args.report_json).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_preview(args) -> int:
    cfg = RunConfig.from_file(args.config, {"output_dir": args.out})
    mesh, background = _load_assets(cfg)
    index = args.frame
    if index < 0 or index >= cfg.frame_count:
        raise ConfigError("frame %d outside configured range [0, %d)"
                          % (index, cfg.frame_count))
    sample = sample_scene(cfg.sweep, index, cfg.seed)
    packet = render_frame(mesh, sample, cfg.camera, background,
                          ambient=cfg.sweep.ambient, albedo=cfg.albedo)
    out = Path(cfg.output_dir) / "preview"
    out.mkdir(parents=True, exist_ok=True)
    rgb_path = out / ("rgb_%06d.png" % index)
    depth_path = out / ("depth16_%06d.png" % index)
    viz_path = out / ("depthviz_%06d.png" % index)
    write_rgb_png(rgb_path, packet.rgb)
    write_depth_png(depth_path, encode_depth16(packet.depth, cfg.encoding))
    write_rgb_png(viz_path, colorize_depth(packet.depth,
                                           cfg.camera.near_clip_m, cfg.camera.far_clip_m))
    for p in (rgb_path, depth_path, viz_path):
        print("wrote %s" % p, file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facedepth",
        description="Synthetic facial RGB-D dataset generator and depth-metric evaluator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render a dataset sweep from a config file")
    p_render.add_argument("--config", required=True, help="JSON run config")
    p_render.add_argument("--frames", type=int, default=None, help="override frame_count")
    p_render.add_argument("--seed", type=int, default=None, help="override seed")
    p_render.add_argument("--out", default=None, help="override output_dir")
    p_render.add_argument("--workers", type=int, default=None,
                          help="parallel frame workers (results identical for any count)")
    p_render.set_defaults(func=cmd_render)

    p_eval = sub.add_parser("eval", help="score predicted depth maps against a dataset")
    p_eval.add_argument("--gt", required=True, help="dataset directory (with manifest)")
    p_eval.add_argument("--pred", required=True,
                        help="directory of predictions named NNNNNN.png or NNNNNN.npy")
    p_eval.add_argument("--align", choices=ALIGN_MODES, default=ALIGN_NONE,
                        help="prediction alignment before scoring")
    p_eval.add_argument("--skip-missing", action="store_true",
                        help="skip frames whose prediction is missing or unreadable")
    p_eval.add_argument("--frame-average", action="store_true",
                        help="average per-frame metrics instead of pixel-weighted pooling")
    p_eval.add_argument("--name", default=None, help="method name for the report row")
    p_eval.add_argument("--report", default=None, help="write the text table here")
    p_eval.add_argument("--report-json", default=None, help="write the JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    p_prev = sub.add_parser("preview", help="render one frame with a colorized depth view")
    p_prev.add_argument("--config", required=True, help="JSON run config")
    p_prev.add_argument("--frame", type=int, default=0, help="frame index to preview")
    p_prev.add_argument("--out", default=None, help="override output_dir")
    p_prev.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 2
    except FaceDepthError as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    except OSError as e:
        print("i/o error: %s" % e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
