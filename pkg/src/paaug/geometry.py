"""Oriented-box geometry for LiDAR scenes.

Boxes live in the sensor frame (x forward, y left, z up). Every box owns a
canonical frame in which its interior is exactly [-1, 1]^3 with +x along the
heading; partitioning, cross-box transplantation and the in-cell containment
checks all happen in that frame.
"""

from dataclasses import dataclass, field, replace

import numpy as np

# Sentinel for points outside every box (and, under random layouts, for
# foreground points claimed by no cuboid).
BACKGROUND = -1


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box.

    Attributes:
        center: (3,) float64, volumetric center in the sensor frame.
        dims: (length, width, height) in meters; length runs along the heading.
        yaw: rotation about +z in radians, measured from +x, in [-pi, pi).
        class_name: object category, e.g. "Car".
        box_index: position of the box within its scene.
    """

    center: np.ndarray
    dims: tuple[float, float, float]
    yaw: float
    class_name: str
    box_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.center.shape != (3,):
            raise ValueError(f"box center must be (3,), got {self.center.shape}")
        if min(self.dims) <= 0:
            raise ValueError(f"box dims must be positive, got {self.dims}")


def _rotation_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def world_to_canonical(points, box):
    """Map sensor-frame points into the box frame where the box is [-1, 1]^3.

    Args:
        points: (N, 3) or (3,) array.
        box: Box3D.

    Returns:
        Canonical coordinates, same leading shape as `points`.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    q = (pts - box.center) @ _rotation_z(box.yaw)  # p @ R == R^T p, undoes yaw
    q *= 2.0 / np.asarray(box.dims)
    return q[0] if np.asarray(points).ndim == 1 else q


def canonical_to_world(points, box):
    """Inverse of world_to_canonical."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    q = pts * (np.asarray(box.dims) / 2.0)
    q = q @ _rotation_z(box.yaw).T + box.center
    return q[0] if np.asarray(points).ndim == 1 else q


def transplant_points(points, src_box, dst_box):
    """Carry point rows from one box into another via canonical coordinates.

    The xyz columns are re-expressed so each point keeps its canonical
    position (the box resize/rotation is implicit); any further columns
    (reflectance) ride along unchanged.

    Args:
        points: (N, D>=3) rows taken from the source box.
        src_box: Box3D the rows currently live in.
        dst_box: Box3D to move them into.

    Returns:
        (N, D) copy with transformed xyz.
    """
    out = np.array(points, dtype=np.float64)
    out[:, :3] = canonical_to_world(world_to_canonical(out[:, :3], src_box), dst_box)
    return out


def box_corners(box):
    """(8, 3) world-frame corners, ordered by canonical sign bits (x, y, z)."""
    signs = np.array([[(j >> a & 1) * 2.0 - 1.0 for a in range(3)] for j in range(8)])
    return canonical_to_world(signs, box)


@dataclass(frozen=True)
class PartitionScheme:
    """Axis-aligned halving of the canonical cube.

    Which axes are split is fixed per class: 8 partitions split x, y and z,
    4 split x and z, 2 split x only. Partition indices pack the per-axis
    sign bits (x is bit 0) compacted over the split axes in x, y, z order;
    coordinate 0 counts as the >= 0 side.
    """

    class_name: str
    split_x: bool
    split_y: bool
    split_z: bool

    @property
    def axes(self):
        return tuple(a for a, f in enumerate((self.split_x, self.split_y, self.split_z)) if f)

    @property
    def partition_count(self):
        return 1 << len(self.axes)

    def cells(self):
        """(T, 2, 3) canonical lo/hi bounds of every partition."""
        lo = np.full((self.partition_count, 3), -1.0)
        hi = np.ones((self.partition_count, 3))
        for bit, axis in enumerate(self.axes):
            neg = (np.arange(self.partition_count) >> bit & 1) == 0
            hi[neg, axis] = 0.0
            lo[~neg, axis] = 0.0
        return np.stack([lo, hi], axis=1)


_SPLITS = {2: (True, False, False), 4: (True, False, True), 8: (True, True, True)}


def make_part_aware_scheme(class_name, partition_count):
    """Build the partition scheme for a class.

    partition_count must be 2 (split heading axis), 4 (heading + vertical)
    or 8 (all three axes).
    """
    if partition_count not in _SPLITS:
        raise ValueError(f"partition count must be one of {sorted(_SPLITS)}, got {partition_count}")
    return PartitionScheme(class_name, *_SPLITS[partition_count])


def partition_index(points, scheme):
    """Partition index of canonical points under `scheme`.

    Args:
        points: (N, 3) or (3,) canonical coordinates.
        scheme: PartitionScheme.

    Returns:
        (N,) int32 (or scalar int for a single point) in [0, T).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    idx = np.zeros(len(pts), dtype=np.int32)
    for bit, axis in enumerate(scheme.axes):
        idx |= (pts[:, axis] >= 0.0).astype(np.int32) << bit
    return int(idx[0]) if np.asarray(points).ndim == 1 else idx


@dataclass(frozen=True)
class RandomPartitionLayout:
    """Per-box set of random canonical cuboids standing in for the scheme cells.

    cuboids: (T, 2, 3) lo/hi bounds inside [-1, 1]^3. A point belongs to the
    first cuboid containing it; points claimed by none keep BACKGROUND as
    their partition and are never augmented.
    """

    cuboids: np.ndarray

    @property
    def partition_count(self):
        return len(self.cuboids)


def make_random_layout(box, count, rng):
    """Draw a random cuboid layout for one box.

    Each cuboid's side is an independent uniform fraction in [0.25, 1.0] of the
    canonical extent per axis, placed uniformly so it stays inside [-1, 1]^3.

    Args:
        box: Box3D the layout is for (the layout itself is purely canonical).
        count: number of cuboids.
        rng: numpy Generator; consumes count*3 size draws then count*3 centers.
    """
    half = rng.uniform(0.25, 1.0, size=(count, 3))  # half-side in canonical units
    centers = rng.uniform(-(1.0 - half), 1.0 - half)
    return RandomPartitionLayout(np.stack([centers - half, centers + half], axis=1))


def layout_partition_index(points, layout):
    """First-containing-cuboid index for canonical points, BACKGROUND if none."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    idx = np.full(len(pts), BACKGROUND, dtype=np.int32)
    for j in range(layout.partition_count - 1, -1, -1):  # earlier cuboids win
        lo, hi = layout.cuboids[j]
        inside = ((pts >= lo) & (pts <= hi)).all(axis=1)
        idx[inside] = j
    return int(idx[0]) if np.asarray(points).ndim == 1 else idx


@dataclass
class SceneAssignment:
    """Per-point box/partition labels plus per-box partition membership.

    Attributes:
        box_index: (N,) int32, BACKGROUND for background points.
        part_index: (N,) int32, partition within the owning box (BACKGROUND
            for background points and for layout-unclaimed foreground).
        cells: per box, (T, 2, 3) canonical bounds of its partitions.
    """

    box_index: np.ndarray
    part_index: np.ndarray
    cells: list[np.ndarray]
    _members: list[list[np.ndarray]] = field(repr=False, default=None)

    def __post_init__(self):
        if self._members is None:
            self._members = []
            for i, cell in enumerate(self.cells):
                own = np.flatnonzero(self.box_index == i)
                part = self.part_index[own]
                self._members.append([own[part == j] for j in range(len(cell))])

    def partition_count(self, i):
        return len(self.cells[i])

    def box_points(self, i):
        """Sorted indices of points assigned to box i (partitioned or not)."""
        return np.flatnonzero(self.box_index == i)

    def partition_points(self, i, j):
        """Sorted indices of points in partition j of box i."""
        return self._members[i][j]

    def partition_counts(self, i):
        """(T,) point count per partition of box i."""
        return np.array([m.size for m in self._members[i]], dtype=np.int64)

    def background_points(self):
        return np.flatnonzero(self.box_index == BACKGROUND)


@dataclass
class Scene:
    """One frame: (N, 4) float64 points (xyz + reflectance) and its boxes."""

    points: np.ndarray
    boxes: list[Box3D]
    assignment: SceneAssignment | None = None

    def with_points(self, points):
        return replace(self, points=points, assignment=None)


def assign_points_to_boxes(points, boxes, scheme_set, layouts=None):
    """Assign every point to at most one box and one partition.

    Containment is closed (|canonical coordinate| <= 1); a point inside
    several boxes goes to the one whose center is nearest, ties to the lower
    box index. Partitions come from each class's scheme, or from the per-box
    random layouts when given.

    Args:
        points: (N, 3) or (N, 4+) array; only xyz is read.
        boxes: list of Box3D.
        scheme_set: mapping class_name -> PartitionScheme.
        layouts: optional list of RandomPartitionLayout, parallel to boxes.

    Returns:
        SceneAssignment.
    """
    xyz = np.asarray(points, dtype=np.float64)[:, :3]
    n = len(xyz)
    box_idx = np.full(n, BACKGROUND, dtype=np.int32)
    part_idx = np.full(n, BACKGROUND, dtype=np.int32)
    cells = []
    if not boxes:
        return SceneAssignment(box_idx, part_idx, cells)

    best = np.full(n, np.inf)  # squared center distance of the owning box
    order = np.argsort(xyz[:, 0])
    xs = xyz[order, 0]

    for i, box in enumerate(boxes):
        if layouts is not None:
            cells.append(np.array(layouts[i].cuboids, dtype=np.float64))
        else:
            cells.append(scheme_set[box.class_name].cells())
        # candidates: inside the bounding sphere's axis intervals, found via
        # the x-sorted order so far-away points are never touched
        r = float(np.linalg.norm(box.dims)) / 2.0 + 1e-6
        lo = np.searchsorted(xs, box.center[0] - r, side="left")
        hi = np.searchsorted(xs, box.center[0] + r, side="right")
        if lo == hi:
            continue
        cand = order[lo:hi]
        sub = xyz[cand]
        near = (np.abs(sub[:, 1] - box.center[1]) <= r) & (np.abs(sub[:, 2] - box.center[2]) <= r)
        cand = cand[near]
        if cand.size == 0:
            continue
        q = world_to_canonical(xyz[cand], box)
        ok = (np.abs(q) <= 1.0).all(axis=1)
        if not ok.any():
            continue
        cand = cand[ok]
        q = q[ok]
        d2 = ((xyz[cand] - box.center) ** 2).sum(axis=1)
        better = d2 < best[cand]  # strict: distance ties stay with the lower index
        if not better.any():
            continue
        sel = cand[better]
        box_idx[sel] = i
        best[sel] = d2[better]
        if layouts is not None:
            part_idx[sel] = layout_partition_index(q[better], layouts[i])
        else:
            part_idx[sel] = partition_index(q[better], scheme_set[box.class_name])

    return SceneAssignment(box_idx, part_idx, cells)


def farthest_point_sampling(points, count, rng):
    """Greedy max-min subset selection over xyz.

    The first index is drawn uniformly from `rng`; every further pick
    maximizes the minimum squared distance to the chosen set, ties going to
    the lowest index.

    Args:
        points: (N, 3+) array, N >= 1.
        count: number of indices to return, 0 <= count <= N.
        rng: numpy Generator (consumes one integer draw when count >= 1).

    Returns:
        (count,) int64 distinct indices, in pick order.
    """
    pts = np.asarray(points, dtype=np.float64)[:, :3]
    n = len(pts)
    if count > n:
        raise ValueError(f"cannot sample {count} points from {n}")
    chosen = np.empty(count, dtype=np.int64)
    if count == 0:
        return chosen
    chosen[0] = int(rng.integers(0, n))
    dist = ((pts - pts[chosen[0]]) ** 2).sum(axis=1)
    dist[chosen[0]] = -1.0  # never re-pick, even among duplicate points
    for t in range(1, count):
        nxt = int(np.argmax(dist))  # first occurrence == lowest index on ties
        chosen[t] = nxt
        np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1), out=dist)
        dist[nxt] = -1.0
    return chosen
