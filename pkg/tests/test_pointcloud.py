"""Point cloud container, formats, and preprocessing contracts."""

import math

import numpy as np
import pytest

from kdcontext.errors import ArgumentError, DimensionError, FormatError, ParseError
from kdcontext.pointcloud import (PointCloud, augment, load_mesh, load_points,
                                  normalize_unit_sphere, resample, rotate_z,
                                  sample_mesh, save_points, split_blocks)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# xyz-text
# ---------------------------------------------------------------------------

def test_load_three_line_text(tmp_path):
    path = write(tmp_path, "tri.xyz", "0 0 0\n1 0 0\n0 1 0\n")
    pc = load_points(path, "xyz-text")
    assert (pc.n, pc.f) == (3, 3)
    assert pc.labels is None


def test_header_label_column(tmp_path):
    path = write(tmp_path, "lab.xyz", "#cols x y z label\n0 0 0 2\n1 0 0 1\n")
    pc = load_points(path, "xyz-text")
    assert (pc.n, pc.f) == (2, 3)
    np.testing.assert_array_equal(pc.labels, [2, 1])


def test_comments_and_blank_lines_skipped(tmp_path):
    path = write(tmp_path, "c.xyz", "# hello\n\n0 0 0\n# mid\n1 1 1\n")
    pc = load_points(path, "xyz-text")
    assert pc.n == 2


def test_malformed_line_names_line_number(tmp_path):
    path = write(tmp_path, "bad.xyz", "0 0 0\n1 oops 0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_points(path, "xyz-text")


def test_inconsistent_columns_names_line_number(tmp_path):
    path = write(tmp_path, "bad.xyz", "0 0 0\n1 1\n")
    with pytest.raises(ParseError, match="line 2"):
        load_points(path, "xyz-text")


def test_too_few_columns_is_dimension_error(tmp_path):
    path = write(tmp_path, "thin.xyz", "0 0\n1 1\n")
    with pytest.raises(DimensionError):
        load_points(path, "xyz-text")


def test_text_roundtrip_within_tolerance(tmp_path, rng):
    pc = PointCloud(rng.normal(size=(50, 4)) * 10,
                    labels=rng.integers(0, 5, size=50))
    path = tmp_path / "rt.xyz"
    save_points(pc, path, "xyz-text")
    back = load_points(path, "xyz-text")
    assert np.abs(back.data - pc.data).max() < 1e-6
    np.testing.assert_array_equal(back.labels, pc.labels)


# ---------------------------------------------------------------------------
# binary-v1
# ---------------------------------------------------------------------------

def test_binary_roundtrip_bit_exact(tmp_path, rng):
    for i in range(100):
        n = int(rng.integers(1, 60))
        f = int(rng.integers(3, 10))
        data = rng.normal(size=(n, f)).astype(np.float32)
        labels = rng.integers(0, 7, size=n) if i % 2 else None
        pc = PointCloud(data, labels=labels)
        path = tmp_path / f"b{i}.bin"
        save_points(pc, path, "binary-v1")
        back = load_points(path, "binary-v1")
        np.testing.assert_array_equal(back.data.astype(np.float32), data)
        assert back.data.dtype == np.float64
        if labels is None:
            assert back.labels is None
        else:
            np.testing.assert_array_equal(back.labels, labels)


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(FormatError, match="magic"):
        load_points(path, "binary-v1")


def test_binary_truncated(tmp_path, rng):
    pc = PointCloud(rng.normal(size=(10, 3)))
    path = tmp_path / "t.bin"
    save_points(pc, path, "binary-v1")
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 5])
    with pytest.raises(FormatError, match="truncated"):
        load_points(path, "binary-v1")


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ArgumentError):
        load_points(tmp_path / "x", "binary-v9")


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def test_normalize_symmetric_pair():
    pc = PointCloud(np.array([[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]))
    out = normalize_unit_sphere(pc)
    np.testing.assert_allclose(out.data, [[1, 0, 0], [-1, 0, 0]], atol=1e-12)


def test_normalize_single_point_maps_to_origin():
    out = normalize_unit_sphere(PointCloud(np.array([[5.0, 5.0, 5.0]])))
    np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])


def test_normalize_random_cloud(rng):
    pc = PointCloud(rng.normal(size=(1000, 3)) * 7 + 3)
    out = normalize_unit_sphere(pc)
    centroid = out.data[:, :3].mean(axis=0)
    assert np.linalg.norm(centroid) < 1e-6
    norms = np.linalg.norm(out.data[:, :3], axis=1)
    assert abs(norms.max() - 1.0) < 1e-9


def test_normalize_idempotent(rng):
    pc = PointCloud(rng.normal(size=(200, 3)) * 4)
    once = normalize_unit_sphere(pc)
    twice = normalize_unit_sphere(once)
    assert np.abs(once.data - twice.data).max() < 1e-9


def test_normalize_leaves_extra_columns(rng):
    data = rng.normal(size=(20, 6))
    out = normalize_unit_sphere(PointCloud(data))
    np.testing.assert_array_equal(out.data[:, 3:], data[:, 3:])


# ---------------------------------------------------------------------------
# resample
# ---------------------------------------------------------------------------

def test_resample_equal_size_is_permutation(rng):
    pc = PointCloud(rng.normal(size=(64, 3)))
    out = resample(pc, 64, seed=9)
    assert sorted(map(tuple, out.data)) == sorted(map(tuple, pc.data))


def test_resample_subsample_without_replacement(rng):
    pc = PointCloud(rng.normal(size=(64, 3)))
    out = resample(pc, 32, seed=1)
    rows = set(map(tuple, out.data))
    assert len(rows) == 32
    assert rows <= set(map(tuple, pc.data))


def test_oversample_count_contract_and_copies():
    pc = PointCloud(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]),
                    labels=np.array([0, 1, 2]))
    out = resample(pc, 8, seed=5)
    assert out.n == 8
    originals = set(map(tuple, pc.data))
    assert set(map(tuple, out.data)) <= originals
    for row, label in zip(out.data, out.labels):
        assert label == int(row[0])  # labels copied with their points


def test_resample_deterministic(rng):
    for case in range(50):
        n = int(rng.integers(1, 40))
        target = int(rng.integers(1, 40))
        seed = int(rng.integers(2 ** 63))
        pc = PointCloud(rng.normal(size=(n, 3)))
        a = resample(pc, target, seed)
        b = resample(pc, target, seed)
        np.testing.assert_array_equal(a.data, b.data)


def test_resample_target_domain(rng):
    with pytest.raises(ArgumentError):
        resample(PointCloud(np.zeros((2, 3))), 0, seed=0)


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------

def test_augment_no_op():
    pc = PointCloud(np.array([[1.0, 2.0, 3.0], [0, 0, 1]]))
    out = augment(pc, rot_z=False, jitter_sigma=0.0, jitter_clip=0.0, seed=3)
    np.testing.assert_array_equal(out.data, pc.data)


def test_rotate_z_quarter_turn():
    out = rotate_z(np.array([[1.0, 0.0, 0.0]]), math.pi / 2)
    np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-9)


def test_augment_rotation_matches_seeded_angle():
    # the rotation angle is the first draw from the seeded generator
    seed = 77
    angle = np.random.Generator(np.random.PCG64(seed)).uniform(0.0, 2.0 * math.pi)
    pc = PointCloud(np.array([[1.0, 0.0, 0.5]]))
    out = augment(pc, rot_z=True, jitter_sigma=0.0, jitter_clip=0.0, seed=seed)
    np.testing.assert_allclose(out.data, rotate_z(pc.data, angle), atol=1e-12)


def test_augment_jitter_statistics(rng):
    pc = PointCloud(rng.normal(size=(1000, 3)))
    out = augment(pc, rot_z=False, jitter_sigma=0.01, jitter_clip=0.05, seed=11)
    delta = out.data - pc.data
    assert np.abs(delta).max() <= 0.05
    assert 0.008 <= delta.std() <= 0.012


def test_augment_preserves_labels_and_extra_columns(rng):
    data = rng.normal(size=(30, 5 + 4))
    pc = PointCloud(data, labels=rng.integers(0, 2, size=30))
    out = augment(pc, rot_z=True, jitter_sigma=0.01, jitter_clip=0.05, seed=2)
    np.testing.assert_array_equal(out.labels, pc.labels)
    np.testing.assert_array_equal(out.data[:, 3:], data[:, 3:])


def test_augment_negative_sigma_rejected():
    with pytest.raises(ArgumentError):
        augment(PointCloud(np.zeros((1, 3))), False, -0.1, 0.0, seed=0)


# ---------------------------------------------------------------------------
# split_blocks
# ---------------------------------------------------------------------------

def room(rng, n, x_extent, y_extent, with_rgb=False, labels=False):
    data = np.empty((n, 6 if with_rgb else 3))
    data[:, 0] = rng.uniform(0, x_extent, size=n)
    data[:, 1] = rng.uniform(0, y_extent, size=n)
    data[:, 2] = rng.uniform(0, 2.5, size=n)
    if with_rgb:
        data[:, 3:6] = rng.uniform(0, 255, size=(n, 3))
    lab = rng.integers(0, 3, size=n) if labels else None
    return PointCloud(data, labels=lab, class_count=3 if labels else None)


def brute_force_cells(xyz, block_xy):
    """Independent per-point floor-division assignment with clamping."""
    lo = xyz.min(axis=0)
    extent = xyz.max(axis=0) - lo
    cells = []
    for p in xyz:
        out = []
        for axis in range(2):
            n_cells = max(1, math.ceil(extent[axis] / block_xy)) if extent[axis] > 0 else 1
            idx = min(int((p[axis] - lo[axis]) // block_xy), n_cells - 1)
            out.append(idx)
        cells.append(tuple(out))
    return cells


def test_two_by_one_room_gives_two_blocks(rng):
    pc = room(rng, 400, 2.0, 1.0)
    blocks = split_blocks(pc, 1.0, 64, seed=0)
    assert len(blocks) == 2
    for b in blocks:
        assert (b.n, b.f) == (64, 9)


def test_block_normalized_position_in_unit_cube(rng):
    pc = room(rng, 500, 3.0, 2.0, with_rgb=True)
    for b in split_blocks(pc, 1.0, 32, seed=1):
        rel = b.data[:, 6:9]
        assert rel.min() >= 0.0 and rel.max() <= 1.0
        assert b.data[:, 3:6].min() >= 0.0 and b.data[:, 3:6].max() <= 1.0


def test_block_membership_matches_bruteforce(rng):
    pc = room(rng, 300, 2.7, 1.9)
    oracle = brute_force_cells(pc.xyz, 1.0)
    expected_counts = {}
    for cell in oracle:
        expected_counts[cell] = expected_counts.get(cell, 0) + 1
    expected_kept = sorted(c for c, k in expected_counts.items() if k >= 16)

    blocks = split_blocks(pc, 1.0, 64, seed=3)
    assert len(blocks) == len(expected_kept)
    # each point lands in at most one block: total raw membership equals
    # the sum of per-cell counts
    assert sum(expected_counts.values()) == pc.n

    # recover absolute positions from the normalized columns and check
    # every emitted point sits in its block's oracle cell
    lo = pc.xyz.min(axis=0)
    extent = pc.xyz.max(axis=0) - lo
    seen_cells = []
    for block in blocks:
        absolute = block.data[:, 6:9] * extent + lo
        cells = set(brute_force_cells_of(absolute, lo, extent, 1.0))
        assert len(cells) == 1
        seen_cells.append(cells.pop())
    assert sorted(seen_cells) == expected_kept


def brute_force_cells_of(points, lo, extent, block_xy):
    cells = []
    for p in points:
        out = []
        for axis in range(2):
            n_cells = max(1, math.ceil(extent[axis] / block_xy)) if extent[axis] > 0 else 1
            idx = min(int((p[axis] - lo[axis]) // block_xy), n_cells - 1)
            out.append(idx)
        cells.append(tuple(out))
    return cells


def test_block_relative_coordinates_and_labels(rng):
    pc = room(rng, 256, 2.0, 2.0, labels=True)
    blocks = split_blocks(pc, 1.0, 128, seed=4)
    for b in blocks:
        assert b.labels is not None and b.labels.shape == (128,)
        assert b.data[:, :3].min() >= 0.0  # relative to block minimum
        assert b.data[:, 0].min() == 0.0 or b.n == 1


def test_ambiguous_column_count_rejected(rng):
    with pytest.raises(DimensionError, match="ambiguous"):
        split_blocks(PointCloud(rng.normal(size=(32, 4))), 1.0, 16, seed=0)
    with pytest.raises(DimensionError, match="ambiguous"):
        split_blocks(PointCloud(rng.normal(size=(32, 5))), 1.0, 16, seed=0)


def test_sparse_blocks_dropped(rng):
    # 20 points in one cell, 3 in another
    data = np.zeros((23, 3))
    data[:20, 0] = rng.uniform(0.0, 0.9, size=20)
    data[20:, 0] = rng.uniform(1.1, 1.9, size=3)
    data[:, 1] = rng.uniform(0.0, 0.9, size=23)
    data[:, 2] = rng.uniform(size=23)
    blocks = split_blocks(PointCloud(data), 1.0, 16, seed=0, min_points=16)
    assert len(blocks) == 1


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def test_mesh_sampling_stays_on_surface(tmp_path, rng):
    text = "# unit square as two triangles\n" \
           "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n" \
           "f 1 2 3\nf 1 3 4\n"
    path = tmp_path / "square.mesh"
    path.write_text(text, encoding="utf-8")
    verts, faces = load_mesh(path)
    pc = sample_mesh(verts, faces, 512, seed=5)
    assert pc.n == 512
    assert np.abs(pc.data[:, 2]).max() < 1e-12
    assert pc.data[:, :2].min() >= 0.0 and pc.data[:, :2].max() <= 1.0


def test_mesh_area_weighting(tmp_path):
    # two disjoint triangles, one with 4x the area of the other
    text = ("v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "v 5 0 0\nv 7 0 0\nv 5 2 0\n"
            "f 1 2 3\nf 4 5 6\n")
    path = tmp_path / "two.mesh"
    path.write_text(text, encoding="utf-8")
    verts, faces = load_mesh(path)
    pc = sample_mesh(verts, faces, 4000, seed=6)
    near_big = (pc.data[:, 0] >= 4.0).mean()
    assert 0.75 <= near_big <= 0.85


def test_mesh_parse_errors(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("v 0 0 0\nf 1 2 9\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_mesh(path)


# ---------------------------------------------------------------------------
# container invariants
# ---------------------------------------------------------------------------

def test_nonfinite_rejected():
    with pytest.raises(ArgumentError):
        PointCloud(np.array([[0.0, 0.0, np.inf]]))


def test_label_out_of_class_range_rejected():
    with pytest.raises(ArgumentError):
        PointCloud(np.zeros((2, 3)), labels=np.array([0, 5]), class_count=3)
