"""Scene- and dataset-level augmentation driver.

Ops run in a configurable order with one numpy Generator per scene, seeded
from the master seed and the frame id, so results do not depend on worker
count or scheduling. Point/partition assignment is carried across ops by
masking survivors and assigning only appended rows, which matches a full
rebuild exactly and consumes no randomness.
"""

import hashlib
import json
import math
import shutil
import time
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment_ops import (
    AugParams,
    dropout_partition,
    mix_partition,
    noise_partition,
    sparsify_partition,
    swap_partition,
)
from .geometry import (
    Scene,
    SceneAssignment,
    assign_points_to_boxes,
    make_part_aware_scheme,
    make_random_layout,
)
from .kitti_io import camera_box_to_lidar, read_frame, write_point_cloud_bin

OP_ORDER = ("dropout", "swap", "mix", "sparsify", "noise")
RNG_ALGORITHMS = ("philox4x64", "pcg64")
DEFAULT_PARTITIONS = {"Car": 8, "Pedestrian": 4, "Cyclist": 4}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Configuration file or mapping failed validation."""


def round_half_up(x):
    """round() without banker's rounding: 1.5 -> 2, 2.5 -> 3."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ClassConfig:
    """Partition count and operator parameters for one class."""

    params: AugParams = field(default_factory=AugParams)
    partitions: int = 8

    def __post_init__(self):
        if self.partitions not in (2, 4, 8):
            raise ValueError(f"partitions must be 2, 4 or 8, got {self.partitions}")


@dataclass(frozen=True)
class PipelineConfig:
    classes: dict
    op_order: tuple = OP_ORDER
    master_seed: int = 0
    rng_algorithm: str = "philox4x64"
    random_partitions: bool = False


def default_config():
    """Defaults: Car with 8 partitions, Pedestrian and Cyclist with 4."""
    classes = {c: ClassConfig(AugParams(), t) for c, t in DEFAULT_PARTITIONS.items()}
    return PipelineConfig(classes=classes)


_PARAM_KEYS = ("p_dropout", "p_swap", "p_mix", "sparse_threshold", "p_sparse", "noise_count", "p_noise")
_TOP_KEYS = {"classes", "op_order", "master_seed", "rng_algorithm", "random_partitions"}


def config_from_mapping(data):
    """Validate a plain mapping (parsed JSON) into a PipelineConfig.

    All problems are collected into one ConfigError. Omitted sections fall
    back to defaults; an empty mapping is a valid all-defaults config.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a mapping")
    errors = []

    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        errors.append(f"unknown keys {unknown}")

    master_seed = data.get("master_seed", 0)
    if isinstance(master_seed, bool) or not isinstance(master_seed, int) or not 0 <= master_seed < 2**64:
        errors.append(f"master_seed must be an integer in [0, 2**64), got {master_seed!r}")
        master_seed = 0

    rng_algorithm = data.get("rng_algorithm", "philox4x64")
    if rng_algorithm not in RNG_ALGORITHMS:
        errors.append(f"rng_algorithm must be one of {list(RNG_ALGORITHMS)}, got {rng_algorithm!r}")
        rng_algorithm = "philox4x64"

    random_partitions = data.get("random_partitions", False)
    if not isinstance(random_partitions, bool):
        errors.append(f"random_partitions must be a bool, got {random_partitions!r}")
        random_partitions = False

    op_order = data.get("op_order", list(OP_ORDER))
    if (
        not isinstance(op_order, (list, tuple))
        or any(op not in OP_ORDER for op in op_order)
        or len(set(op_order)) != len(op_order)
    ):
        errors.append(f"op_order must list distinct ops from {list(OP_ORDER)}, got {op_order!r}")
        op_order = OP_ORDER

    classes = {}
    entries = data.get("classes")
    if entries is None:
        classes = default_config().classes
    elif not isinstance(entries, Mapping):
        errors.append("classes must map class names to parameter mappings")
    else:
        for cls, entry in entries.items():
            if not isinstance(entry, Mapping):
                errors.append(f"classes.{cls} must be a mapping")
                continue
            bad = sorted(set(entry) - set(_PARAM_KEYS) - {"partitions"})
            if bad:
                errors.append(f"classes.{cls}: unknown keys {bad}")
                continue
            try:
                params = AugParams(**{k: entry[k] for k in _PARAM_KEYS if k in entry})
                classes[cls] = ClassConfig(params, entry.get("partitions", DEFAULT_PARTITIONS.get(cls, 8)))
            except (TypeError, ValueError) as exc:
                errors.append(f"classes.{cls}: {exc}")

    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return PipelineConfig(
        classes=classes,
        op_order=tuple(op_order),
        master_seed=master_seed,
        rng_algorithm=rng_algorithm,
        random_partitions=random_partitions,
    )


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    try:
        return config_from_mapping(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def derive_scene_seed(master_seed, frame_id):
    """Per-frame seed: 64-bit FNV-1a of the frame id, xor the master seed.

    Depends only on the frame id string, so a frame's augmentation is the
    same no matter which worker handles it or in what order.
    """
    h = _FNV_OFFSET
    for b in frame_id.encode("ascii"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h ^ (master_seed & _MASK64)


def make_rng(algorithm, seed):
    """Generator over the pinned counter-based stream (or pcg64 if asked)."""
    if algorithm == "philox4x64":
        return np.random.Generator(np.random.Philox(key=seed))
    if algorithm == "pcg64":
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    raise ValueError(f"unknown rng algorithm {algorithm!r}")


def scheme_set(config):
    return {c: make_part_aware_scheme(c, cc.partitions) for c, cc in config.classes.items()}


def build_scene(frame, config):
    """Frame -> Scene: float64 points plus sensor-frame boxes for configured classes.

    Labels of classes outside the config (DontCare included) contribute no
    boxes; their points stay background.
    """
    boxes = []
    for label in frame.labels:
        if label.class_name not in config.classes:
            continue
        boxes.append(camera_box_to_lidar(label, frame.calib, box_index=len(boxes)))
    return Scene(points=np.asarray(frame.cloud, dtype=np.float64), boxes=boxes)


@dataclass
class AugmentedScene:
    scene: Scene
    reports: list
    seed: int


def _advance_assignment(asg, keep, points, boxes, schemes, layouts):
    """Carry an assignment across one op instead of rebuilding it.

    Ops only drop rows or append rows; surviving rows keep their coordinates
    and the boxes never move, so a survivor's (box, partition) labels cannot
    change. Masking the old arrays and assigning just the appended tail gives
    the same result as a full rebuild, bit for bit.
    """
    n_survive = int(keep.sum())
    n_added = len(points) - n_survive
    if n_added == 0 and keep.all():
        return asg
    box_idx = asg.box_index[keep]
    part_idx = asg.part_index[keep]
    if n_added:
        tail = assign_points_to_boxes(points[n_survive:], boxes, schemes, layouts)
        box_idx = np.concatenate([box_idx, tail.box_index])
        part_idx = np.concatenate([part_idx, tail.part_index])
    return SceneAssignment(box_idx, part_idx, asg.cells)


def augment_scene(scene, config, seed):
    """Run the configured op sequence on one scene with a fresh Generator.

    Draw order is fixed: random layouts (if enabled) box by box, then per op
    the per-box (or per-partition) gates and selections in index order.
    """
    rng = make_rng(config.rng_algorithm, seed)
    schemes = scheme_set(config)
    layouts = None
    if config.random_partitions:
        layouts = [
            make_random_layout(b, schemes[b.class_name].partition_count, rng)
            for b in scene.boxes
        ]
    p_drop = {c: cc.params.p_dropout for c, cc in config.classes.items()}
    p_swap = {c: cc.params.p_swap for c, cc in config.classes.items()}
    p_mix = {c: cc.params.p_mix for c, cc in config.classes.items()}
    s_thresh = {c: cc.params.sparse_threshold for c, cc in config.classes.items()}
    p_sparse = {c: cc.params.p_sparse for c, cc in config.classes.items()}
    n_count = {c: cc.params.noise_count for c, cc in config.classes.items()}
    p_noise = {c: cc.params.p_noise for c, cc in config.classes.items()}

    assignment = assign_points_to_boxes(scene.points, scene.boxes, schemes, layouts)
    reports = []
    for pos, op in enumerate(config.op_order):
        if op == "dropout":
            scene, rep = dropout_partition(scene, assignment, p_drop, rng)
        elif op == "swap":
            scene, rep = swap_partition(scene, assignment, p_swap, rng)
        elif op == "mix":
            scene, rep = mix_partition(scene, assignment, p_mix, rng)
        elif op == "sparsify":
            scene, rep = sparsify_partition(scene, assignment, s_thresh, p_sparse, rng)
        elif op == "noise":
            scene, rep = noise_partition(scene, assignment, n_count, p_noise, rng)
        else:
            raise ValueError(f"unknown op {op!r}")
        reports.append(rep)
        if pos + 1 < len(config.op_order):
            assignment = _advance_assignment(
                assignment, rep.keep_mask, scene.points, scene.boxes, schemes, layouts
            )
    return AugmentedScene(scene=scene, reports=reports, seed=seed)


def pa_aug_scene(frame, config):
    """Augment one frame with its deterministic per-frame seed."""
    return augment_scene(build_scene(frame, config), config, derive_scene_seed(config.master_seed, frame.frame_id))


def list_frame_ids(input_root, split=None):
    if split is not None:
        ids = [ln.strip() for ln in Path(split).read_text().splitlines() if ln.strip()]
        if not ids:
            raise ValueError(f"{split}: empty split file")
        return ids
    vdir = Path(input_root) / "velodyne"
    ids = sorted(p.stem for p in vdir.glob("*.bin"))
    if not ids:
        raise ValueError(f"no velodyne scans under {vdir}")
    return ids


def _augment_one(job):
    input_root, output_root, config, frame_id = job
    t0 = time.perf_counter()
    try:
        frame = read_frame(input_root, frame_id)
        out = pa_aug_scene(frame, config)
        root = Path(output_root)
        write_point_cloud_bin(out.scene.points, root / "velodyne" / f"{frame_id}.bin")
        # labels and calib pass through byte for byte
        shutil.copyfile(
            Path(input_root) / "label_2" / f"{frame_id}.txt", root / "label_2" / f"{frame_id}.txt"
        )
        shutil.copyfile(
            Path(input_root) / "calib" / f"{frame_id}.txt", root / "calib" / f"{frame_id}.txt"
        )
        return {
            "frame_id": frame_id,
            "seed": out.seed,
            "points_in": int(len(frame.cloud)),
            "points_out": int(len(out.scene.points)),
            "ops": {r.op: {k: v for k, v in r.as_dict().items() if k != "op"} for r in out.reports},
            "elapsed_s": round(time.perf_counter() - t0, 6),
        }
    except Exception as exc:
        return {"frame_id": frame_id, "error": f"{type(exc).__name__}: {exc}"}


def augment_dataset(input_root, output_root, config, split=None, workers=1):
    """Augment every frame of a KITTI-layout dataset into output_root.

    Scans the velodyne directory (or takes ids from a split file), augments
    each frame independently and writes summary.json next to the output
    payload. Failed frames are recorded and skipped, not fatal.

    Returns:
        The summary dict (also written to summary.json).
    """
    ids = list_frame_ids(input_root, split)
    root = Path(output_root)
    for sub in ("velodyne", "label_2", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    jobs = [(str(input_root), str(output_root), config, fid) for fid in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_augment_one, jobs))
    else:
        results = [_augment_one(j) for j in jobs]

    op_totals = {}
    for r in results:
        for op, counters in r.get("ops", {}).items():
            tot = op_totals.setdefault(op, dict.fromkeys(counters, 0))
            for k, v in counters.items():
                tot[k] += v
    failures = [r for r in results if "error" in r]
    summary = {
        "frames_total": len(ids),
        "frames_failed": len(failures),
        "points_in": sum(r.get("points_in", 0) for r in results),
        "points_out": sum(r.get("points_out", 0) for r in results),
        "ops": op_totals,
        "frames": results,
        "elapsed_s": round(time.perf_counter() - t0, 6),
        "workers": workers,
    }
    (root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def subset_split(input_path, output_path, fraction, seed):
    """Sample a random subset of a split file.

    Keeps round(fraction * n) ids (round half up), drawn without replacement
    and written sorted ascending. fraction 1.0 reproduces the full split.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ids = [ln.strip() for ln in Path(input_path).read_text().splitlines() if ln.strip()]
    if not ids:
        raise ValueError(f"{input_path}: empty split file")
    count = round_half_up(fraction * len(ids))
    rng = make_rng("philox4x64", seed)
    picked = rng.permutation(len(ids))[:count]
    kept = sorted(ids[i] for i in picked)
    Path(output_path).write_text("".join(x + "\n" for x in kept))
    return kept


def tree_digest(root):
    """SHA-256 over a dataset's payload files (calib, label_2, velodyne).

    Hashes relative names and contents in sorted order. summary.json and
    manifest.json sit outside the digest on purpose: they carry timing
    metadata that varies run to run.
    """
    h = hashlib.sha256()
    root = Path(root)
    for sub in ("calib", "label_2", "velodyne"):
        d = root / sub
        if not d.is_dir():
            continue
        for f in sorted(d.iterdir()):
            if f.is_file():
                h.update(f"{sub}/{f.name}".encode())
                h.update(b"\0")
                h.update(f.read_bytes())
    return h.hexdigest()
