"""Partition-level stochastic augmentation operators.

Five operators: per-box dropout, swap and mix, per-partition sparsify and
noise. Each sits behind an independent Bernoulli gate and reads the scene
plus its point assignment as frozen input, returning a new scene and a small
report. Boxes are never modified; surviving points keep their original order
and any new rows are appended at the end.

Parameters may be a plain float/int (applied to every box) or a mapping from
class name; boxes of classes missing from a mapping are left alone without
consuming any random draws.
"""

from dataclasses import dataclass, field
from collections.abc import Mapping

import numpy as np

from .geometry import canonical_to_world, farthest_point_sampling, transplant_points


@dataclass(frozen=True)
class AugParams:
    """Per-class operator parameters.

    p_* are Bernoulli gate probabilities; sparse_threshold is the point
    budget a partition is downsampled to (only partitions strictly above it
    are eligible); noise_count is the number of points injected per fired
    partition.
    """

    p_dropout: float = 0.2
    p_swap: float = 0.2
    p_mix: float = 0.2
    sparse_threshold: int = 40
    p_sparse: float = 0.1
    noise_count: int = 10
    p_noise: float = 0.1

    def __post_init__(self):
        for name in ("p_dropout", "p_swap", "p_mix", "p_sparse", "p_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if int(self.sparse_threshold) < 1:
            raise ValueError(f"sparse_threshold must be >= 1, got {self.sparse_threshold}")
        if int(self.noise_count) < 0:
            raise ValueError(f"noise_count must be >= 0, got {self.noise_count}")


@dataclass
class OpReport:
    """What one operator pass did to one scene."""

    op: str
    gates_fired: int = 0
    boxes_gated: int = 0
    boxes_skipped: int = 0
    partitions_affected: int = 0
    points_removed: int = 0
    points_added: int = 0
    # survivor mask over the pre-op rows; lets the pipeline advance the
    # point assignment instead of recomputing it from geometry
    keep_mask: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self):
        return {
            "op": self.op,
            "gates_fired": self.gates_fired,
            "boxes_gated": self.boxes_gated,
            "boxes_skipped": self.boxes_skipped,
            "partitions_affected": self.partitions_affected,
            "points_removed": self.points_removed,
            "points_added": self.points_added,
        }


def _param(value, class_name):
    """Resolve a scalar-or-per-class parameter; None means leave the box alone."""
    if isinstance(value, Mapping):
        return value.get(class_name)
    return value


def _rebuild(scene, keep, added):
    if added:
        return scene.with_points(np.concatenate([scene.points[keep]] + added))
    if keep.all():
        return scene.with_points(scene.points)
    return scene.with_points(scene.points[keep])


def dropout_partition(scene, assignment, p_dropout, rng):
    """Delete one uniformly chosen partition per fired box.

    The partition index is drawn among all T partitions, so an empty one can
    be chosen and the box comes through unchanged.
    """
    report = OpReport("dropout")
    keep = np.ones(len(scene.points), dtype=bool)
    for i, box in enumerate(scene.boxes):
        p = _param(p_dropout, box.class_name)
        if p is None or rng.random() >= p:
            continue
        report.gates_fired += 1
        report.boxes_gated += 1
        d = int(rng.integers(0, assignment.partition_count(i)))
        members = assignment.partition_points(i, d)
        if members.size:
            keep[members] = False
            report.partitions_affected += 1
            report.points_removed += members.size
    report.keep_mask = keep
    return _rebuild(scene, keep, []), report


def _pick_transplant(scene, assignment, i, rng, report):
    """Choose (partition, donor box) for a fired swap/mix on box i.

    The partition is uniform over box i's non-empty partitions, the donor
    uniform over other boxes of the same class whose matching partition is
    non-empty; if either pool is empty the box is skipped.
    """
    nonempty = np.flatnonzero(assignment.partition_counts(i) > 0)
    if nonempty.size == 0:
        report.boxes_skipped += 1
        return None
    k = int(nonempty[int(rng.integers(0, nonempty.size))])
    cls = scene.boxes[i].class_name
    donors = [
        j
        for j, b in enumerate(scene.boxes)
        if j != i and b.class_name == cls and assignment.partition_points(j, k).size
    ]
    if not donors:
        report.boxes_skipped += 1
        return None
    return k, donors[int(rng.integers(0, len(donors)))]


def _transplant_rows(scene, assignment, k, donor, recipient):
    rows = scene.points[assignment.partition_points(donor, k)]
    return transplant_points(rows, scene.boxes[donor], scene.boxes[recipient])


def swap_partition(scene, assignment, p_swap, rng):
    """Replace one partition per fired box with the matching partition of a
    same-class donor box, resized through canonical coordinates."""
    report = OpReport("swap")
    keep = np.ones(len(scene.points), dtype=bool)
    added = []
    for i, box in enumerate(scene.boxes):
        p = _param(p_swap, box.class_name)
        if p is None or rng.random() >= p:
            continue
        report.gates_fired += 1
        report.boxes_gated += 1
        pick = _pick_transplant(scene, assignment, i, rng, report)
        if pick is None:
            continue
        k, donor = pick
        own = assignment.partition_points(i, k)
        keep[own] = False
        moved = _transplant_rows(scene, assignment, k, donor, i)
        added.append(moved)
        report.partitions_affected += 1
        report.points_removed += own.size
        report.points_added += len(moved)
    report.keep_mask = keep
    return _rebuild(scene, keep, added), report


def mix_partition(scene, assignment, p_mix, rng):
    """Union one partition per fired box with the matching partition of a
    same-class donor box; the box keeps its own points."""
    report = OpReport("mix")
    keep = np.ones(len(scene.points), dtype=bool)
    added = []
    for i, box in enumerate(scene.boxes):
        p = _param(p_mix, box.class_name)
        if p is None or rng.random() >= p:
            continue
        report.gates_fired += 1
        report.boxes_gated += 1
        pick = _pick_transplant(scene, assignment, i, rng, report)
        if pick is None:
            continue
        k, donor = pick
        moved = _transplant_rows(scene, assignment, k, donor, i)
        added.append(moved)
        report.partitions_affected += 1
        report.points_added += len(moved)
    report.keep_mask = keep
    return _rebuild(scene, keep, added), report


def sparsify_partition(scene, assignment, sparse_threshold, p_sparse, rng):
    """Downsample each fired partition to exactly sparse_threshold points by
    farthest point sampling. Only partitions strictly above the threshold
    draw a gate."""
    report = OpReport("sparsify")
    keep = np.ones(len(scene.points), dtype=bool)
    for i, box in enumerate(scene.boxes):
        thresh = _param(sparse_threshold, box.class_name)
        p = _param(p_sparse, box.class_name)
        if thresh is None or p is None:
            continue
        thresh = int(thresh)
        fired_here = False
        for j in range(assignment.partition_count(i)):
            members = assignment.partition_points(i, j)
            if members.size <= thresh:
                continue
            if rng.random() >= p:
                continue
            report.gates_fired += 1
            fired_here = True
            picked = farthest_point_sampling(scene.points[members], thresh, rng)
            keep[members] = False
            keep[members[picked]] = True
            report.partitions_affected += 1
            report.points_removed += members.size - thresh
        if fired_here:
            report.boxes_gated += 1
    report.keep_mask = keep
    return _rebuild(scene, keep, []), report


def noise_partition(scene, assignment, noise_count, p_noise, rng):
    """Inject noise_count uniform points into each fired partition's cell.

    Every partition draws a gate, empty ones included. Coordinates are
    uniform over the partition's canonical cell and mapped to the sensor
    frame; reflectance is uniform in [0, 1).
    """
    report = OpReport("noise")
    added = []
    for i, box in enumerate(scene.boxes):
        cn = _param(noise_count, box.class_name)
        p = _param(p_noise, box.class_name)
        if cn is None or p is None:
            continue
        cn = int(cn)
        cells = assignment.cells[i]
        fired_here = False
        for j in range(len(cells)):
            if rng.random() >= p:
                continue
            report.gates_fired += 1
            fired_here = True
            lo, hi = cells[j]
            q = rng.uniform(lo, hi, size=(cn, 3))
            refl = rng.random(cn)
            if cn:
                added.append(np.column_stack([canonical_to_world(q, box), refl]))
                report.partitions_affected += 1
                report.points_added += cn
        if fired_here:
            report.boxes_gated += 1
    report.keep_mask = np.ones(len(scene.points), dtype=bool)
    return _rebuild(scene, report.keep_mask, added), report


OPS = {
    "dropout": dropout_partition,
    "swap": swap_partition,
    "mix": mix_partition,
    "sparsify": sparsify_partition,
    "noise": noise_partition,
}
