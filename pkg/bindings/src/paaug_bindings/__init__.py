"""In-memory augmentation for training dataloaders.

Wraps the file-based pipeline behind plain arrays: a scene goes in as
(points, boxes, classes) and comes back augmented exactly as the command
line would write it. Each call behaves like augmenting a one-frame dataset
keyed as frame "000000": points pass through float32 on the way in to
match the on-disk format, and the generator stream derives from the master
seed the same way, so the returned cloud is bit-identical to the bytes the
command line writes for the same scene and seed.

float32 inputs are read in place (no copy); other dtypes are converted to
a temporary float32 copy. Caller arrays are never written to. Calls share
no state, so concurrent use from dataloader workers is safe; each call
owns its generator.
"""

from collections.abc import Mapping
from pathlib import Path

import numpy as np

import paaug
from paaug import (
    Box3D,
    ConfigError,
    Scene,
    augment_scene,
    config_from_mapping,
    default_config,
    derive_scene_seed,
    load_config,
)

__all__ = ["FRAME_ID", "augment", "version_info"]
__version__ = paaug.__version__

FRAME_ID = "000000"


def version_info():
    """Identifiers for training logs.

    Returns:
        dict with "version" (equal to the command line --version output)
        and "rng_algorithm" (the default generator stream id).
    """
    return {
        "version": f"paaug {paaug.__version__}",
        "rng_algorithm": default_config().rng_algorithm,
    }


def _resolve_config(config):
    if config is None:
        return default_config()
    if isinstance(config, Mapping):
        return config_from_mapping(config)
    if isinstance(config, (str, Path)):
        return load_config(config)
    raise ConfigError(
        f"config must be a mapping, a file path or None, got {type(config).__name__}"
    )


def _as_points(points):
    pts = np.asarray(points)
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError(f"points must be (n, 4) x/y/z/reflectance, got shape {pts.shape}")
    pts = np.asarray(pts, dtype=np.float32)
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite values")
    return pts


def _as_boxes(boxes, classes, names):
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 7:
        raise ValueError(f"boxes must be (m, 7) cx/cy/cz/l/w/h/yaw, got shape {arr.shape}")
    cls = np.asarray(classes)
    if cls.shape != (len(arr),):
        raise ValueError(f"classes must be shape ({len(arr)},) to match boxes, got {cls.shape}")
    if cls.size and not np.issubdtype(cls.dtype, np.integer):
        raise ValueError(f"classes must be integers, got dtype {cls.dtype}")
    if not np.isfinite(arr).all():
        raise ValueError("boxes contain non-finite values")
    bad = np.flatnonzero((arr[:, 3:6] <= 0.0).any(axis=1))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"box {i} has non-positive dims {tuple(arr[i, 3:6])}")
    if cls.size and (int(cls.min()) < -1 or int(cls.max()) >= len(names)):
        raise ValueError(
            f"class indices must be -1 (skip) or 0..{len(names) - 1} for {names}, "
            f"got range [{int(cls.min())}, {int(cls.max())}]"
        )
    out = []
    for row, c in zip(arr, cls):
        if c == -1:
            continue
        out.append(
            Box3D(
                center=row[:3],
                dims=(float(row[3]), float(row[4]), float(row[5])),
                yaw=float(row[6]),
                class_name=names[int(c)],
                box_index=len(out),
            )
        )
    return out


def augment(points, boxes, classes, config=None, seed=None):
    """Augment one in-memory scene exactly as the file pipeline would.

    Args:
        points: (n, 4) array of x, y, z, reflectance; read as float32 and
            never written to.
        boxes: (m, 7) array of cx, cy, cz, l, w, h, yaw in the sensor
            frame, heading along l.
        classes: (m,) integers indexing the configured class names in
            order (defaults: 0=Car, 1=Pedestrian, 2=Cyclist); -1 marks a
            box to leave alone, its points stay background.
        config: pipeline config as a mapping or a JSON file path; None
            uses the built-in defaults.
        seed: master seed in [0, 2**64), overriding the config value the
            way the command line --seed flag does; None keeps the config's.

    Returns:
        (points, reports): the augmented (n', 4) float32 cloud and a list
        with one counter dict per op in execution order.

    Raises:
        ValueError: malformed points, boxes or classes.
        ConfigError: invalid config or seed.
    """
    cfg = _resolve_config(config)
    if seed is None:
        seed = cfg.master_seed
    elif isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    pts32 = _as_points(points)
    scene = Scene(
        points=pts32.astype(np.float64),
        boxes=_as_boxes(boxes, classes, list(cfg.classes)),
    )
    out = augment_scene(scene, cfg, derive_scene_seed(int(seed), FRAME_ID))
    return out.scene.points.astype(np.float32), [r.as_dict() for r in out.reports]
