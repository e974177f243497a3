"""Part-aware, partition-based stochastic augmentation for LiDAR scenes.

Point clouds are split into background and per-box foreground, each box into
2/4/8 canonical partitions, and five operators (dropout, swap, mix,
sparsify, noise) rewrite partitions behind independent Bernoulli gates.
Includes KITTI dataset I/O, a deterministic multi-worker dataset driver and
matching robustness corruptions (per-object dropout, global FPS
sparsification, Gaussian jitter).
"""

__version__ = "0.1.0"

from .augment_ops import (
    OPS,
    AugParams,
    OpReport,
    dropout_partition,
    mix_partition,
    noise_partition,
    sparsify_partition,
    swap_partition,
)
from .corruption import (
    CORRUPTION_KINDS,
    CorruptionSpec,
    corrupt_dataset,
    corrupt_dropout,
    corrupt_jitter,
    corrupt_sparse,
)
from .geometry import (
    BACKGROUND,
    Box3D,
    PartitionScheme,
    RandomPartitionLayout,
    Scene,
    SceneAssignment,
    assign_points_to_boxes,
    box_corners,
    canonical_to_world,
    farthest_point_sampling,
    layout_partition_index,
    make_part_aware_scheme,
    make_random_layout,
    partition_index,
    transplant_points,
    world_to_canonical,
)
from .kitti_io import (
    KITTI_CLASSES,
    Calibration,
    Frame,
    KittiFormatError,
    KittiLabel,
    camera_box_to_lidar,
    export_ply,
    format_label,
    identity_calibration,
    lidar_box_to_camera,
    normalize_angle,
    read_calib,
    read_frame,
    read_labels,
    read_point_cloud_bin,
    write_calib,
    write_labels,
    write_point_cloud_bin,
)
from .pipeline import (
    DEFAULT_PARTITIONS,
    OP_ORDER,
    RNG_ALGORITHMS,
    AugmentedScene,
    ClassConfig,
    ConfigError,
    PipelineConfig,
    augment_dataset,
    augment_scene,
    build_scene,
    config_from_mapping,
    default_config,
    derive_scene_seed,
    list_frame_ids,
    load_config,
    make_rng,
    pa_aug_scene,
    round_half_up,
    scheme_set,
    subset_split,
    tree_digest,
)
