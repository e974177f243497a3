"""Command line front end.

stdout carries machine-readable JSON only; progress and diagnostics go to
stderr. Exit codes: 0 success, 1 runtime failure (unreadable frames, failed
scenes), 2 usage or configuration errors.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .corruption import CORRUPTION_KINDS, CorruptionSpec, corrupt_dataset
from .geometry import assign_points_to_boxes
from .kitti_io import KittiFormatError, export_ply, read_frame, read_labels
from .pipeline import (
    ConfigError,
    augment_dataset,
    build_scene,
    default_config,
    list_frame_ids,
    load_config,
    scheme_set,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="paaug",
        description="Partition-based augmentation and corruption for KITTI-style LiDAR datasets.",
    )
    parser.add_argument("--version", action="version", version=f"paaug {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="augment a dataset into a new directory")
    p.add_argument("--input", required=True, help="dataset root with velodyne/label_2/calib")
    p.add_argument("--output", required=True)
    p.add_argument("--config", required=True, help="JSON pipeline config")
    p.add_argument("--seed", type=int, help="override the config master_seed")
    p.add_argument("--split", help="file of frame ids, one per line (default: every scan)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("corrupt", help="write a corrupted copy of a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", required=True, choices=CORRUPTION_KINDS)
    p.add_argument("--keep-fraction", type=float, default=0.30, help="sparse: fraction of points kept")
    p.add_argument("--sigma", type=float, default=0.1, help="jitter: coordinate noise std in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("inspect", help="render frames to colored ASCII PLY")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="directory for <frame>.ply files")
    p.add_argument("--frame", action="append", dest="frames", help="frame id, repeatable")
    p.add_argument("--color-by", choices=("partition", "box", "corruption"), default="partition")
    p.add_argument("--config", help="pipeline config for class/partition setup (default built-in)")
    p.add_argument("--split")

    p = sub.add_parser("stats", help="print dataset statistics as JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--split")
    return parser


def _load_config_arg(path):
    if path is None:
        return default_config()
    return load_config(path)


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_augment(args):
    config = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be in [0, 2**64), got {args.seed}")
        config = dataclasses.replace(config, master_seed=args.seed)
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    summary = augment_dataset(
        args.input, args.output, config, split=args.split, workers=args.workers
    )
    _emit(summary)
    if summary["frames_failed"]:
        print(f"{summary['frames_failed']} of {summary['frames_total']} frames failed", file=sys.stderr)
        return 1
    return 0


def cmd_corrupt(args):
    try:
        spec = CorruptionSpec(
            kind=args.kind, keep_fraction=args.keep_fraction, sigma=args.sigma, seed=args.seed
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    manifest = corrupt_dataset(args.input, args.output, spec, split=args.split, workers=args.workers)
    _emit(manifest)
    if manifest["frames_failed"]:
        print(f"{manifest['frames_failed']} of {manifest['frames_total']} frames failed", file=sys.stderr)
        return 1
    return 0


def cmd_inspect(args):
    config = _load_config_arg(args.config)
    ids = args.frames or list_frame_ids(args.input, args.split)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    schemes = scheme_set(config)
    written = []
    for fid in ids:
        frame = read_frame(args.input, fid)
        scene = build_scene(frame, config)
        scene.assignment = assign_points_to_boxes(scene.points, scene.boxes, schemes)
        path = out / f"{fid}.ply"
        export_ply(scene, path, color_by=args.color_by)
        written.append(str(path))
        print(f"wrote {path}", file=sys.stderr)
    _emit({"written": written})
    return 0


def cmd_stats(args):
    ids = list_frame_ids(args.input, args.split)
    root = Path(args.input)
    points = []
    objects = {}
    for fid in ids:
        size = (root / "velodyne" / f"{fid}.bin").stat().st_size
        points.append(size // 16)
        for label in read_labels(root / "label_2" / f"{fid}.txt"):
            objects[label.class_name] = objects.get(label.class_name, 0) + 1
    _emit(
        {
            "frames": len(ids),
            "points_total": int(sum(points)),
            "points_min": int(min(points)),
            "points_max": int(max(points)),
            "points_mean": round(sum(points) / len(points), 2),
            "objects": dict(sorted(objects.items())),
        }
    )
    return 0


_COMMANDS = {
    "augment": cmd_augment,
    "corrupt": cmd_corrupt,
    "inspect": cmd_inspect,
    "stats": cmd_stats,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KittiFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
