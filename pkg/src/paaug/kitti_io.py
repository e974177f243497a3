"""KITTI object-detection file formats.

Velodyne scans are flat little-endian float32 records of (x, y, z,
reflectance); labels are the 15/16-field text format with boxes given in the
rectified camera frame; calib files hold the projection and frame-change
matrices. Boxes are converted to sensor-frame Box3D for augmentation and
back for any label round trips.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BACKGROUND, Box3D

KITTI_CLASSES = (
    "Car",
    "Van",
    "Truck",
    "Pedestrian",
    "Person_sitting",
    "Cyclist",
    "Tram",
    "Misc",
    "DontCare",
)


class KittiFormatError(ValueError):
    """A KITTI file did not parse: wrong size, field count or missing key."""


def read_point_cloud_bin(path):
    """Read a velodyne .bin scan.

    Returns:
        (N, 4) float32 array of x, y, z, reflectance.
    """
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise KittiFormatError(
            f"{path}: {len(raw)} bytes is not a whole number of 16-byte point records"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4).copy()


def write_point_cloud_bin(cloud, path):
    """Write an (N, 4) array as a velodyne .bin scan (little-endian float32)."""
    arr = np.ascontiguousarray(cloud, dtype="<f4")
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (N, 4) cloud, got shape {arr.shape}")
    Path(path).write_bytes(arr.tobytes())


@dataclass
class KittiLabel:
    """One line of a KITTI label file.

    dims is (height, width, length); location is the bottom-face center of
    the box in the rectified camera frame.
    """

    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dims: tuple[float, float, float]
    location: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    @property
    def is_dontcare(self):
        return self.class_name == "DontCare"


def read_labels(path):
    """Parse a label_2 .txt file into a list of KittiLabel (blank lines skipped)."""
    labels = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (15, 16):
            raise KittiFormatError(
                f"{path}:{lineno}: expected 15 or 16 fields, got {len(fields)}"
            )
        try:
            vals = [float(x) for x in fields[1:]]
        except ValueError as exc:
            raise KittiFormatError(f"{path}:{lineno}: {exc}") from None
        labels.append(
            KittiLabel(
                class_name=fields[0],
                truncation=vals[0],
                occlusion=int(vals[1]),
                alpha=vals[2],
                bbox=tuple(vals[3:7]),
                dims=tuple(vals[7:10]),
                location=tuple(vals[10:13]),
                rotation_y=vals[13],
                score=vals[14] if len(vals) == 15 else None,
            )
        )
    return labels


def format_label(label):
    vals = [
        label.truncation,
        label.occlusion,
        label.alpha,
        *label.bbox,
        *label.dims,
        *label.location,
        label.rotation_y,
    ]
    if label.score is not None:
        vals.append(label.score)
    return " ".join([label.class_name] + [f"{v:.6f}" for v in vals])


def write_labels(labels, path):
    Path(path).write_text("".join(format_label(l) + "\n" for l in labels))


_CALIB_KEYS = {
    "P0": (3, 4),
    "P1": (3, 4),
    "P2": (3, 4),
    "P3": (3, 4),
    "R0_rect": (3, 3),
    "Tr_velo_to_cam": (3, 4),
    "Tr_imu_to_velo": (3, 4),
}


@dataclass
class Calibration:
    """Per-frame calibration matrices, keyed as in the calib .txt files."""

    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray
    Tr_imu_to_velo: np.ndarray

    def rect_to_lidar_matrix(self):
        """(4, 4) inverse of the rectified-camera <- lidar chain."""
        try:
            return np.linalg.inv(self.lidar_to_rect_matrix())
        except np.linalg.LinAlgError:
            raise KittiFormatError("calibration chain R0_rect @ Tr_velo_to_cam is singular") from None

    def lidar_to_rect_matrix(self):
        rect = np.eye(4)
        rect[:3, :3] = self.R0_rect
        velo = np.eye(4)
        velo[:3, :4] = self.Tr_velo_to_cam
        return rect @ velo


def read_calib(path):
    entries = {}
    for line in Path(path).read_text().splitlines():
        if ":" not in line:
            continue
        key, rest = line.split(":", 1)
        key = key.strip()
        if key not in _CALIB_KEYS:
            continue
        shape = _CALIB_KEYS[key]
        try:
            mat = np.array([float(x) for x in rest.split()], dtype=np.float64)
        except ValueError as exc:
            raise KittiFormatError(f"{path}: {key}: {exc}") from None
        if mat.size != shape[0] * shape[1]:
            raise KittiFormatError(
                f"{path}: {key}: expected {shape[0] * shape[1]} values, got {mat.size}"
            )
        entries[key] = mat.reshape(shape)
    missing = sorted(set(_CALIB_KEYS) - set(entries))
    if missing:
        raise KittiFormatError(f"{path}: missing calibration keys {missing}")
    return Calibration(**entries)


def write_calib(calib, path):
    lines = []
    for key, shape in _CALIB_KEYS.items():
        vals = getattr(calib, key).reshape(-1)
        lines.append(key + ": " + " ".join(f"{v:.12e}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def identity_calibration():
    """Calibration whose camera frame coincides with the lidar frame."""
    eye34 = np.eye(3, 4)
    return Calibration(
        P0=eye34.copy(),
        P1=eye34.copy(),
        P2=eye34.copy(),
        P3=eye34.copy(),
        R0_rect=np.eye(3),
        Tr_velo_to_cam=eye34.copy(),
        Tr_imu_to_velo=eye34.copy(),
    )


def normalize_angle(a):
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def camera_box_to_lidar(label, calib, box_index=0):
    """Convert a camera-frame KITTI label to a sensor-frame Box3D.

    The label location (bottom-face center) is mapped through the inverse
    rectification/extrinsic chain and lifted by half the height to the
    volumetric center; dims reorder from (h, w, l) to (l, w, h); yaw becomes
    -rotation_y - pi/2, wrapped to [-pi, pi).
    """
    h, w, l = label.dims
    bottom = calib.rect_to_lidar_matrix() @ np.array([*label.location, 1.0])
    center = bottom[:3] + np.array([0.0, 0.0, h / 2.0])
    return Box3D(
        center=center,
        dims=(l, w, h),
        yaw=normalize_angle(-label.rotation_y - math.pi / 2.0),
        class_name=label.class_name,
        box_index=box_index,
    )


def lidar_box_to_camera(box, calib):
    """Inverse of camera_box_to_lidar.

    Returns:
        (location, dims, rotation_y) with dims back in (h, w, l) order and
        location at the bottom-face center in the rectified camera frame.
    """
    l, w, h = box.dims
    bottom = box.center - np.array([0.0, 0.0, h / 2.0])
    loc = calib.lidar_to_rect_matrix() @ np.array([*bottom, 1.0])
    return tuple(loc[:3]), (h, w, l), normalize_angle(-box.yaw - math.pi / 2.0)


@dataclass
class Frame:
    """One dataset frame: scan, labels and calibration."""

    frame_id: str
    cloud: np.ndarray
    labels: list[KittiLabel]
    calib: Calibration


def read_frame(root, frame_id):
    root = Path(root)
    return Frame(
        frame_id=frame_id,
        cloud=read_point_cloud_bin(root / "velodyne" / f"{frame_id}.bin"),
        labels=read_labels(root / "label_2" / f"{frame_id}.txt"),
        calib=read_calib(root / "calib" / f"{frame_id}.txt"),
    )


# distinct colors for partition/box rendering; background stays gray
_PALETTE = np.array(
    [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (227, 119, 194),
        (23, 190, 207),
        (188, 189, 34),
        (140, 86, 75),
        (255, 187, 120),
    ],
    dtype=np.uint8,
)
_GRAY = np.array((128, 128, 128), dtype=np.uint8)
_WHITE = np.array((235, 235, 235), dtype=np.uint8)
_RED = np.array((214, 39, 40), dtype=np.uint8)


def export_ply(scene, path, color_by="partition"):
    """Write a scene as ASCII PLY with per-vertex colors.

    color_by "partition" colors points by partition index, "box" by box
    index and "corruption" highlights all foreground in red; background is
    gray throughout, as are foreground points no cuboid claimed.

    Requires scene.assignment to be populated.
    """
    if scene.assignment is None:
        raise ValueError("scene has no assignment; run assign_points_to_boxes first")
    if color_by not in ("partition", "box", "corruption"):
        raise ValueError(f"unknown color_by {color_by!r}")
    bi = scene.assignment.box_index
    pi = scene.assignment.part_index
    colors = np.tile(_GRAY, (len(scene.points), 1))
    fg = bi != BACKGROUND
    if color_by == "partition":
        claimed = fg & (pi != BACKGROUND)
        colors[claimed] = _PALETTE[pi[claimed] % len(_PALETTE)]
        colors[fg & (pi == BACKGROUND)] = _WHITE
    elif color_by == "box":
        colors[fg] = _PALETTE[bi[fg] % len(_PALETTE)]
    else:
        colors[fg] = _RED

    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(scene.points)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for p, c in zip(scene.points, colors):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}")
    Path(path).write_text("\n".join(lines) + "\n")
