"""Per-object dropout, FPS sparsification and jitter corruptions."""

import numpy as np
import pytest

from conftest import ScriptedRng, label_for_box, write_dataset
from paaug import (
    Box3D,
    CorruptionSpec,
    Frame,
    canonical_to_world,
    corrupt_dataset,
    corrupt_dropout,
    corrupt_jitter,
    corrupt_sparse,
    identity_calibration,
    make_part_aware_scheme,
    make_rng,
    read_point_cloud_bin,
    tree_digest,
)


def frame_with_occupancy(occupancy, cls="Car", n_background=25):
    """In-memory frame with one box and the given per-partition point counts."""
    calib = identity_calibration()
    box = Box3D(center=np.array([6.0, 2.0, 0.5]), dims=(3.8, 1.7, 1.5), yaw=0.4,
                class_name=cls, box_index=0)
    cells = make_part_aware_scheme(cls, 8 if cls == "Car" else 4).cells()
    chunks = []
    tag = 1.0
    tags = {}
    for j, count in enumerate(occupancy):
        lo, hi = cells[j]
        offs = (np.arange(count)[:, None] * np.array([0.0071, 0.0031, 0.0053])) % 0.3 - 0.15
        world = canonical_to_world((lo + hi) / 2.0 + offs, box)
        chunks.append(np.column_stack([world, tag + np.arange(count)]))
        tags[j] = set((tag + np.arange(count)).tolist())
        tag += count
    bg = np.column_stack(
        [np.linspace(-30, 30, n_background), np.full(n_background, 40.0),
         np.zeros(n_background), tag + np.arange(n_background)]
    )
    chunks.append(bg)
    cloud = np.concatenate(chunks).astype(np.float32)
    return Frame("000000", cloud, [label_for_box(box, calib)], calib), tags


def test_dropout_removes_one_well_populated_partition():
    frame, tags = frame_with_occupancy((10, 50, 50, 10, 0, 0, 0, 0))
    # median of non-empty counts is 30 -> candidates are partitions 1 and 2
    rng = ScriptedRng(integers=[0])
    out, drops = corrupt_dropout(frame, rng)
    assert rng.exhausted()
    assert drops == [
        {"box_index": 0, "class_name": "Car", "partition": 1, "points_removed": 50}
    ]
    assert len(out.cloud) == len(frame.cloud) - 50
    remaining = set(out.cloud[:, 3].tolist())
    assert tags[1].isdisjoint(remaining)
    assert tags[0] <= remaining and tags[2] <= remaining
    # survivors are the original float32 rows in order
    keep = ~np.isin(frame.cloud[:, 3], sorted(tags[1]))
    np.testing.assert_array_equal(out.cloud, frame.cloud[keep])


def test_dropout_skips_object_with_single_populated_partition():
    frame, _ = frame_with_occupancy((0, 40, 0, 0, 0, 0, 0, 0))
    out, drops = corrupt_dropout(frame, ScriptedRng())  # any draw would raise
    assert drops == []
    np.testing.assert_array_equal(out.cloud, frame.cloud)


def test_dropout_median_rule_is_inclusive():
    # counts (8, 12): median 10 -> only partition 1 qualifies; equal counts
    # (12, 12): median 12 -> both do
    frame, tags = frame_with_occupancy((8, 12, 0, 0, 0, 0, 0, 0))
    out, drops = corrupt_dropout(frame, ScriptedRng(integers=[0]))
    assert drops[0]["partition"] == 1
    frame, tags = frame_with_occupancy((12, 0, 0, 12, 0, 0, 0, 0))
    out, drops = corrupt_dropout(frame, ScriptedRng(integers=[1]))
    assert drops[0]["partition"] == 3


def test_dropout_hits_every_eligible_object():
    calib = identity_calibration()
    boxes = [
        Box3D(center=np.array([5.0, 0.0, 0.0]), dims=(4.0, 1.8, 1.5), yaw=0.0, class_name="Car", box_index=0),
        Box3D(center=np.array([-8.0, 3.0, 0.0]), dims=(0.8, 0.6, 1.7), yaw=1.0, class_name="Pedestrian", box_index=1),
    ]
    rng = np.random.default_rng(6)
    chunks = []
    for box in boxes:
        q = rng.uniform(-0.9, 0.9, size=(120, 3))
        chunks.append(np.column_stack([canonical_to_world(q, box), rng.random(120)]))
    cloud = np.concatenate(chunks).astype(np.float32)
    frame = Frame("000001", cloud, [label_for_box(b, calib) for b in boxes], calib)
    out, drops = corrupt_dropout(frame, make_rng("philox4x64", 3))
    assert [d["box_index"] for d in drops] == [0, 1]
    assert len(out.cloud) == len(cloud) - sum(d["points_removed"] for d in drops)


def test_sparse_keeps_exact_rounded_count_and_order():
    rng0 = np.random.default_rng(12)
    for n in (1, 2, 3, 7, 10, 33, 101, 500):
        cloud = np.column_stack([rng0.normal(size=(n, 3)) * 5, np.arange(n, dtype=float)]).astype(np.float32)
        frame = Frame("x", cloud, [], identity_calibration())
        out = corrupt_sparse(frame, 0.30, make_rng("philox4x64", n))
        assert len(out.cloud) == int(np.floor(0.30 * n + 0.5))
        # a subsequence of the input: tags strictly increasing
        t = out.cloud[:, 3]
        assert (np.diff(t) > 0).all()


def test_sparse_full_fraction_keeps_everything():
    cloud = np.random.default_rng(0).normal(size=(40, 4)).astype(np.float32)
    frame = Frame("x", cloud, [], identity_calibration())
    out = corrupt_sparse(frame, 1.0, make_rng("philox4x64", 1))
    np.testing.assert_array_equal(out.cloud, cloud)


def test_jitter_zero_sigma_is_identity():
    cloud = np.random.default_rng(1).normal(size=(100, 4)).astype(np.float32)
    frame = Frame("x", cloud, [], identity_calibration())
    out = corrupt_jitter(frame, 0.0, make_rng("philox4x64", 2))
    assert out.cloud.tobytes() == cloud.tobytes()


def test_jitter_moves_xyz_only():
    cloud = np.random.default_rng(2).normal(size=(2000, 4)).astype(np.float32)
    frame = Frame("x", cloud, [], identity_calibration())
    out = corrupt_jitter(frame, 0.1, make_rng("philox4x64", 3))
    np.testing.assert_array_equal(out.cloud[:, 3], cloud[:, 3])
    d = out.cloud[:, :3].astype(np.float64) - cloud[:, :3].astype(np.float64)
    assert (np.abs(d) > 0).all(axis=1).any()
    assert 0.08 < d.std() < 0.12
    assert not np.shares_memory(out.cloud, frame.cloud)


def test_corruption_spec_validation():
    with pytest.raises(ValueError):
        CorruptionSpec(kind="melt")
    with pytest.raises(ValueError):
        CorruptionSpec(kind="sparse", keep_fraction=0.0)
    with pytest.raises(ValueError):
        CorruptionSpec(kind="sparse", keep_fraction=1.2)
    with pytest.raises(ValueError):
        CorruptionSpec(kind="jitter", sigma=-0.5)


@pytest.mark.parametrize("kind", ["dropout", "sparse", "jitter"])
def test_corrupt_dataset_end_to_end(kind, dataset, tmp_path):
    root, ids = dataset
    spec = CorruptionSpec(kind=kind, seed=11)
    out = tmp_path / kind
    manifest = corrupt_dataset(root, out, spec)
    assert manifest["frames_total"] == len(ids) and manifest["frames_failed"] == 0
    assert (out / "manifest.json").exists()
    for fid, rec in zip(ids, manifest["frames"]):
        assert (out / "label_2" / f"{fid}.txt").read_bytes() == (root / "label_2" / f"{fid}.txt").read_bytes()
        assert (out / "calib" / f"{fid}.txt").read_bytes() == (root / "calib" / f"{fid}.txt").read_bytes()
        cloud = read_point_cloud_bin(out / "velodyne" / f"{fid}.bin")
        assert len(cloud) == rec["points_out"]
        if kind == "sparse":
            assert rec["points_out"] == int(np.floor(0.30 * rec["points_in"] + 0.5))
        if kind == "jitter":
            assert rec["points_out"] == rec["points_in"]
        if kind == "dropout":
            assert rec["drops"] and rec["points_out"] < rec["points_in"]

    rerun = tmp_path / f"{kind}-again"
    corrupt_dataset(root, rerun, spec, workers=2)
    assert tree_digest(out) == tree_digest(rerun)


def test_corrupt_dataset_distinct_seeds_differ(dataset, tmp_path):
    root, _ = dataset
    a, b = tmp_path / "a", tmp_path / "b"
    corrupt_dataset(root, a, CorruptionSpec(kind="jitter", seed=1))
    corrupt_dataset(root, b, CorruptionSpec(kind="jitter", seed=2))
    assert tree_digest(a) != tree_digest(b)
