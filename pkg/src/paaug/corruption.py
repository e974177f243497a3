"""Robustness-benchmark corruptions of KITTI frames.

Three corruptions: per-object partition dropout, global farthest-point
sparsification, and Gaussian jitter of the coordinates. Each dataset run is
driven by one seed with per-frame streams derived from the frame id, same as
the augmentation pipeline. Labels and calib pass through untouched.
"""

import json
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import assign_points_to_boxes, farthest_point_sampling, make_part_aware_scheme
from .kitti_io import camera_box_to_lidar, read_frame, write_point_cloud_bin
from .pipeline import DEFAULT_PARTITIONS, derive_scene_seed, list_frame_ids, make_rng, round_half_up

CORRUPTION_KINDS = ("dropout", "sparse", "jitter")


@dataclass(frozen=True)
class CorruptionSpec:
    """Which corruption to apply and with what parameters."""

    kind: str
    keep_fraction: float = 0.30
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"kind must be one of {list(CORRUPTION_KINDS)}, got {self.kind!r}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def corrupt_dropout(frame, rng, classes=None):
    """Delete one well-populated partition from every eligible object.

    Partitions come from the class's part-aware scheme (default 8/4/4 for
    Car/Pedestrian/Cyclist). An object is eligible when at least two of its
    partitions are non-empty; the dropped one is uniform among partitions
    whose count is >= the median non-empty partition count, so the cut
    always hurts. Objects with fewer than two non-empty partitions are left
    untouched without consuming a draw.

    Returns:
        (corrupted Frame, list of per-object drop records).
    """
    classes = DEFAULT_PARTITIONS if classes is None else classes
    schemes = {c: make_part_aware_scheme(c, t) for c, t in classes.items()}
    boxes = []
    for label in frame.labels:
        if label.class_name in classes:
            boxes.append(camera_box_to_lidar(label, frame.calib, box_index=len(boxes)))
    asg = assign_points_to_boxes(frame.cloud, boxes, schemes)
    keep = np.ones(len(frame.cloud), dtype=bool)
    drops = []
    for i, box in enumerate(boxes):
        counts = asg.partition_counts(i)
        nonzero = counts[counts > 0]
        if nonzero.size < 2:
            continue
        median = np.median(nonzero)
        cand = np.flatnonzero(counts >= median)
        pick = int(cand[int(rng.integers(0, cand.size))])
        members = asg.partition_points(i, pick)
        keep[members] = False
        drops.append(
            {
                "box_index": i,
                "class_name": box.class_name,
                "partition": pick,
                "points_removed": int(members.size),
            }
        )
    return replace(frame, cloud=frame.cloud[keep]), drops


def corrupt_sparse(frame, keep_fraction, rng):
    """Keep round(keep_fraction * n) points, chosen by farthest point sampling.

    Kept rows stay in their original order (the FPS indices are sorted), so
    the output is a strict subsequence of the input scan.
    """
    n = len(frame.cloud)
    count = round_half_up(keep_fraction * n)
    idx = np.sort(farthest_point_sampling(frame.cloud, count, rng))
    return replace(frame, cloud=frame.cloud[idx])


def corrupt_jitter(frame, sigma, rng):
    """Add iid Gaussian noise (std sigma) to x, y, z; reflectance untouched."""
    cloud = frame.cloud.copy()
    xyz = cloud[:, :3].astype(np.float64)
    cloud[:, :3] = xyz + rng.normal(0.0, sigma, size=(len(cloud), 3))
    return replace(frame, cloud=cloud)


def _corrupt_one(job):
    input_root, output_root, spec, frame_id = job
    try:
        frame = read_frame(input_root, frame_id)
        rng = make_rng("philox4x64", derive_scene_seed(spec.seed, frame_id))
        record = {
            "frame_id": frame_id,
            "seed": derive_scene_seed(spec.seed, frame_id),
            "points_in": int(len(frame.cloud)),
        }
        if spec.kind == "dropout":
            out, drops = corrupt_dropout(frame, rng)
            record["drops"] = drops
        elif spec.kind == "sparse":
            out = corrupt_sparse(frame, spec.keep_fraction, rng)
        else:
            out = corrupt_jitter(frame, spec.sigma, rng)
        record["points_out"] = int(len(out.cloud))
        root = Path(output_root)
        write_point_cloud_bin(out.cloud, root / "velodyne" / f"{frame_id}.bin")
        shutil.copyfile(
            Path(input_root) / "label_2" / f"{frame_id}.txt", root / "label_2" / f"{frame_id}.txt"
        )
        shutil.copyfile(
            Path(input_root) / "calib" / f"{frame_id}.txt", root / "calib" / f"{frame_id}.txt"
        )
        return record
    except Exception as exc:
        return {"frame_id": frame_id, "error": f"{type(exc).__name__}: {exc}"}


def corrupt_dataset(input_root, output_root, spec, split=None, workers=1):
    """Generate a corrupted copy of a KITTI-layout dataset.

    Writes velodyne/label_2/calib plus manifest.json describing the run.

    Returns:
        The manifest dict.
    """
    ids = list_frame_ids(input_root, split)
    root = Path(output_root)
    for sub in ("velodyne", "label_2", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    jobs = [(str(input_root), str(output_root), spec, fid) for fid in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_corrupt_one, jobs))
    else:
        results = [_corrupt_one(j) for j in jobs]

    failures = [r for r in results if "error" in r]
    manifest = {
        "kind": spec.kind,
        "seed": spec.seed,
        "frames_total": len(ids),
        "frames_failed": len(failures),
        "points_in": sum(r.get("points_in", 0) for r in results),
        "points_out": sum(r.get("points_out", 0) for r in results),
        "frames": results,
        "elapsed_s": round(time.perf_counter() - t0, 6),
        "workers": workers,
    }
    if spec.kind == "sparse":
        manifest["keep_fraction"] = spec.keep_fraction
    if spec.kind == "jitter":
        manifest["sigma"] = spec.sigma
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
