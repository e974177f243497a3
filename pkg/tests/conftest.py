"""Shared synthetic-scene and dataset builders for the test suite."""

import numpy as np
import pytest

from paaug import (
    Box3D,
    Calibration,
    KittiLabel,
    Scene,
    camera_box_to_lidar,
    canonical_to_world,
    format_label,
    identity_calibration,
    lidar_box_to_camera,
    read_labels,
    write_calib,
    write_labels,
    write_point_cloud_bin,
)

_DIMS = {
    "Car": (3.9, 1.6, 1.56),
    "Pedestrian": (0.8, 0.6, 1.73),
    "Cyclist": (1.76, 0.6, 1.73),
}


def grid_boxes(rng, classes):
    """Non-overlapping boxes on a 9 m grid with jittered dims and yaw."""
    boxes = []
    for i, cls in enumerate(classes):
        center = np.array(
            [9.0 * (i % 6) - 22.0, 9.0 * (i // 6) - 13.0, float(rng.uniform(-0.5, 0.5))]
        )
        base = _DIMS[cls]
        dims = tuple(float(d * rng.uniform(0.9, 1.1)) for d in base)
        boxes.append(
            Box3D(
                center=center,
                dims=dims,
                yaw=float(rng.uniform(-np.pi, np.pi)),
                class_name=cls,
                box_index=i,
            )
        )
    return boxes


def fill_scene(rng, boxes, n_background=1500, per_box=120, margin=0.97):
    """Scene with uniform background plus a cluster strictly inside each box.

    Points are float32-quantized (as if file-borne) and reflectances are
    unique per point, so rows can be identified after augmentation.
    """
    chunks = [
        np.column_stack(
            [
                rng.uniform(-45.0, 45.0, n_background),
                rng.uniform(-45.0, 45.0, n_background),
                rng.uniform(-2.0, 4.0, n_background),
            ]
        )
    ]
    for box in boxes:
        q = rng.uniform(-margin, margin, size=(per_box, 3))
        chunks.append(canonical_to_world(q, box))
    xyz = np.concatenate(chunks)
    n = len(xyz)
    refl = (np.arange(n) + 0.5) / n  # unique row tags
    pts = np.column_stack([xyz, refl])[rng.permutation(n)]
    return Scene(points=pts.astype(np.float32).astype(np.float64), boxes=list(boxes))


def make_scene(seed, classes=("Car", "Car", "Pedestrian"), **kw):
    rng = np.random.default_rng(seed)
    return fill_scene(rng, grid_boxes(rng, classes), **kw)


def kittiish_calibration():
    """Camera frame rotated/offset from the sensor the way it usually is."""
    calib = identity_calibration()
    calib.Tr_velo_to_cam = np.array(
        [
            [0.0, -1.0, 0.0, 0.02],
            [0.0, 0.0, -1.0, -0.05],
            [1.0, 0.0, 0.0, 0.27],
        ]
    )
    c, s = np.cos(0.002), np.sin(0.002)
    calib.R0_rect = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return calib


def label_for_box(box, calib, cls=None):
    loc, dims, ry = lidar_box_to_camera(box, calib)
    return KittiLabel(
        class_name=cls or box.class_name,
        truncation=0.0,
        occlusion=0,
        alpha=0.0,
        bbox=(0.0, 0.0, 50.0, 50.0),
        dims=dims,
        location=loc,
        rotation_y=ry,
    )


DONTCARE_LINE = "DontCare -1 -1 -10 500.0 150.0 550.0 180.0 -1 -1 -1 -1000 -1000 -1000 -10"


def write_dataset(
    root,
    seed,
    n_frames=4,
    classes=("Car", "Car", "Pedestrian", "Cyclist"),
    n_background=800,
    per_box=100,
):
    """Write a synthetic KITTI-layout dataset; returns the frame ids.

    Labels go through their text form and back before the point clusters are
    generated, so every cluster sits strictly inside the box a reader will
    reconstruct from the files.
    """
    rng = np.random.default_rng(seed)
    calib = kittiish_calibration()
    for sub in ("velodyne", "label_2", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    ids = []
    for k in range(n_frames):
        fid = f"{k:06d}"
        ids.append(fid)
        boxes = grid_boxes(rng, classes)
        lines = [format_label(label_for_box(b, calib)) for b in boxes]
        lines.append(DONTCARE_LINE)
        (root / "label_2" / f"{fid}.txt").write_text("\n".join(lines) + "\n")
        write_calib(calib, root / "calib" / f"{fid}.txt")
        parsed = read_labels(root / "label_2" / f"{fid}.txt")
        reboxes = [
            camera_box_to_lidar(l, calib, i)
            for i, l in enumerate(l for l in parsed if not l.is_dontcare)
        ]
        scene = fill_scene(rng, reboxes, n_background=n_background, per_box=per_box)
        write_point_cloud_bin(scene.points, root / "velodyne" / f"{fid}.bin")
    return ids


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "kitti"
    ids = write_dataset(root, seed=42)
    return root, ids


class ScriptedRng:
    """Generator stand-in with pre-programmed gate/choice draws.

    random() with no size pops the script; sized random()/uniform() return
    midpoint-style deterministic arrays. Running past the script raises,
    which doubles as an assertion that no extra draws happen.
    """

    def __init__(self, randoms=(), integers=()):
        self._randoms = list(randoms)
        self._integers = list(integers)

    def random(self, size=None):
        if size is None:
            if not self._randoms:
                raise AssertionError("unexpected rng.random() draw")
            return self._randoms.pop(0)
        return np.full(size, 0.5)

    def integers(self, low, high):
        if not self._integers:
            raise AssertionError("unexpected rng.integers() draw")
        v = self._integers.pop(0)
        assert low <= v < high, f"scripted integer {v} outside [{low}, {high})"
        return v

    def uniform(self, low, high, size=None):
        low = np.broadcast_to(np.asarray(low, dtype=np.float64), size)
        high = np.broadcast_to(np.asarray(high, dtype=np.float64), size)
        return (low + high) / 2.0

    def exhausted(self):
        return not self._randoms and not self._integers
