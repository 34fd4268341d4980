"""Point cloud container, file formats, and preprocessing operations.

A :class:`PointCloud` is an ``n x f`` matrix of per-point features whose
first three columns are always x, y, z coordinates, plus an optional
integer label per point.  Two on-disk formats are supported:

``xyz-text``
    UTF-8, one point per line, whitespace-separated decimals.  An
    optional first line ``#cols <name ...>`` declares column roles; the
    first three names must be ``x y z`` and a column named ``label``
    holds integer class ids.  Lines starting with ``#`` are comments.

``binary-v1``
    Magic bytes ``3DCN``, u8 version (=1), u32 little-endian point
    count, u32 feature count, u8 label flag, the ``n*f`` float32
    little-endian row-major data matrix, then ``n`` u32 labels when the
    label flag is set.

All randomized operations take an explicit 64-bit seed and draw from a
``numpy.random.Generator`` seeded with PCG64, so outputs are
reproducible across platforms and runs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError, FormatError, ParseError

BINARY_MAGIC = b"3DCN"
BINARY_VERSION = 1

_HEADER_PREFIX = "#cols"


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class PointCloud:
    """n points with f features each; columns 0..2 are x, y, z.

    ``labels`` is an optional length-n vector of class ids and
    ``class_count`` the number of classes they are drawn from.
    """

    data: np.ndarray
    labels: np.ndarray | None = None
    class_count: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"point matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1:
            raise DimensionError("point cloud must contain at least one point")
        if data.shape[1] < 3:
            raise DimensionError(
                f"point cloud needs at least 3 coordinate columns, got {data.shape[1]}"
            )
        if not np.isfinite(data).all():
            raise ArgumentError("point cloud contains non-finite values")
        self.data = data
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (data.shape[0],):
                raise ArgumentError(
                    f"labels must be a length-{data.shape[0]} vector, got shape {labels.shape}"
                )
            if labels.size and labels.min() < 0:
                raise ArgumentError("labels must be non-negative")
            if self.class_count is not None and labels.max() >= self.class_count:
                raise ArgumentError(
                    f"label {labels.max()} out of range for class_count={self.class_count}"
                )
            self.labels = labels

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def f(self) -> int:
        return self.data.shape[1]

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    def replace_data(self, data: np.ndarray) -> "PointCloud":
        return PointCloud(data, labels=self.labels, class_count=self.class_count)

    def take(self, idx: np.ndarray) -> "PointCloud":
        labels = self.labels[idx] if self.labels is not None else None
        return PointCloud(self.data[idx], labels=labels, class_count=self.class_count)


def rotate_z(points: np.ndarray, angle: float) -> np.ndarray:
    """Rotate an (n, 3) coordinate block about the z axis."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ rot.T


# ---------------------------------------------------------------------------
# file io
# ---------------------------------------------------------------------------

def load_points(path, format: str = "xyz-text") -> PointCloud:
    """Read a point cloud from ``path`` in the named format."""
    if format == "xyz-text":
        return _load_text(path)
    if format == "binary-v1":
        return _load_binary(path)
    raise ArgumentError(f"unknown point format {format!r}")


def save_points(pc: PointCloud, path, format: str = "xyz-text") -> None:
    """Write a point cloud to ``path`` in the named format."""
    if format == "xyz-text":
        _save_text(pc, path)
    elif format == "binary-v1":
        _save_binary(pc, path)
    else:
        raise ArgumentError(f"unknown point format {format!r}")


def _default_column_names(f: int, has_labels: bool):
    names = ["x", "y", "z"]
    if f >= 6:
        names += ["r", "g", "b"]
    if f >= 9:
        names += ["nx", "ny", "nz"]
    while len(names) < f:
        names.append(f"c{len(names)}")
    names = names[:f]
    if has_labels:
        names.append("label")
    return names


def _load_text(path) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    names = None
    rows = []
    labels = []
    label_col = None
    n_cols = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if names is None and not rows and line.startswith(_HEADER_PREFIX):
                names = line[len(_HEADER_PREFIX):].split()
                if len(names) < 3 or names[:3] != ["x", "y", "z"]:
                    raise ParseError(
                        f"line {lineno}: column header must start with 'x y z', got {names}"
                    )
                if names.count("label") > 1:
                    raise ParseError(f"line {lineno}: more than one label column declared")
                if "label" in names:
                    label_col = names.index("label")
                n_cols = len(names)
            continue
        parts = line.split()
        if n_cols is None:
            n_cols = len(parts)
        if len(parts) != n_cols:
            raise ParseError(
                f"line {lineno}: expected {n_cols} columns, found {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if label_col is not None:
            lab = values.pop(label_col)
            if lab != int(lab) or lab < 0:
                raise ParseError(f"line {lineno}: label must be a non-negative integer")
            labels.append(int(lab))
        rows.append(values)

    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[1] < 3:
        raise DimensionError(
            f"{path}: needs at least 3 coordinate columns, found {data.shape[1]}"
        )
    return PointCloud(data, labels=np.asarray(labels) if labels else None)


def _save_text(pc: PointCloud, path) -> None:
    names = _default_column_names(pc.f, pc.labels is not None)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER_PREFIX + " " + " ".join(names) + "\n")
        for i in range(pc.n):
            cols = ["%.12g" % v for v in pc.data[i]]
            if pc.labels is not None:
                cols.append(str(int(pc.labels[i])))
            fh.write(" ".join(cols) + "\n")


def _load_binary(path) -> PointCloud:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = struct.calcsize("<4sBIIB")
    if len(blob) < head:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, f, has_labels = struct.unpack_from("<4sBIIB", blob, 0)
    if magic != BINARY_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    need = head + 4 * n * f + (4 * n if has_labels else 0)
    if len(blob) < need:
        raise FormatError(f"{path}: truncated payload ({len(blob)} < {need} bytes)")
    data = np.frombuffer(blob, dtype="<f4", count=n * f, offset=head)
    data = data.reshape(n, f).astype(np.float64)
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<u4", count=n, offset=head + 4 * n * f)
        labels = labels.astype(np.int64)
    return PointCloud(data, labels=labels)


def _save_binary(pc: PointCloud, path) -> None:
    has_labels = pc.labels is not None
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBIIB", BINARY_MAGIC, BINARY_VERSION, pc.n, pc.f,
                             1 if has_labels else 0))
        fh.write(np.ascontiguousarray(pc.data, dtype="<f4").tobytes())
        if has_labels:
            fh.write(np.ascontiguousarray(pc.labels, dtype="<u4").tobytes())


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def normalize_unit_sphere(pc: PointCloud) -> PointCloud:
    """Center coordinates at the origin and scale the farthest point to norm 1.

    Non-coordinate columns pass through untouched.  A cloud whose points
    all coincide maps to the origin.
    """
    data = pc.data.copy()
    xyz = data[:, :3]
    xyz = xyz - xyz.mean(axis=0)
    radius = np.sqrt((xyz ** 2).sum(axis=1).max())
    if radius > 0.0:
        xyz = xyz / radius
    data[:, :3] = xyz
    return pc.replace_data(data)


def resample(pc: PointCloud, target_n: int, seed: int) -> PointCloud:
    """Return exactly ``target_n`` points, deterministically under ``seed``.

    When the cloud is at least as large as the target, points are drawn
    without replacement; otherwise ``target_n`` points are drawn
    uniformly with replacement.  Labels travel with their points.
    """
    if target_n < 1:
        raise ArgumentError(f"target_n must be >= 1, got {target_n}")
    rng = _rng(seed)
    if pc.n >= target_n:
        idx = rng.choice(pc.n, size=target_n, replace=False)
    else:
        idx = rng.integers(0, pc.n, size=target_n)
    return pc.take(idx)


def augment(pc: PointCloud, rot_z: bool, jitter_sigma: float, jitter_clip: float,
            seed: int) -> PointCloud:
    """Randomly rotate about the z axis and jitter coordinates.

    One uniform angle in [0, 2*pi) rotates the whole cloud (the first
    draw from the seeded generator, so tests can reproduce it), then
    per-coordinate Gaussian noise with std ``jitter_sigma`` clipped to
    ``[-jitter_clip, +jitter_clip]`` is added.  Labels and non-coordinate
    columns are untouched.
    """
    if jitter_sigma < 0 or jitter_clip < 0:
        raise ArgumentError("jitter_sigma and jitter_clip must be >= 0")
    rng = _rng(seed)
    data = pc.data.copy()
    if rot_z:
        angle = rng.uniform(0.0, 2.0 * math.pi)
        data[:, :3] = rotate_z(data[:, :3], angle)
    if jitter_sigma > 0:
        noise = rng.normal(0.0, jitter_sigma, size=(pc.n, 3))
        np.clip(noise, -jitter_clip, jitter_clip, out=noise)
        data[:, :3] += noise
    return pc.replace_data(data)


def _grid_cells(values: np.ndarray, lo: float, extent: float, cell: float):
    """Number of cells and the cell index of every value along one axis."""
    n_cells = max(1, int(math.ceil(extent / cell))) if extent > 0 else 1
    idx = np.floor((values - lo) / cell).astype(np.int64)
    return n_cells, np.clip(idx, 0, n_cells - 1)


def split_blocks(pc: PointCloud, block_xy: float, points_per_block: int, seed: int,
                 min_points: int = 16) -> list[PointCloud]:
    """Cut the xy plane into ``block_xy`` square cells and emit one fixed-size
    cloud per sufficiently populated cell.

    Each output block has 9 feature columns: coordinates relative to the
    block's per-axis minimum, RGB rescaled from [0, 255] to [0, 1] (zeros
    when the input has no color), and the absolute position normalized to
    [0, 1] by the full cloud's bounding box.  Cells with fewer than
    ``min_points`` raw points are dropped; the rest are resampled to
    ``points_per_block``.
    """
    if block_xy <= 0:
        raise ArgumentError(f"block_xy must be positive, got {block_xy}")
    if pc.f in (4, 5):
        raise DimensionError(
            f"ambiguous columns: f={pc.f} (expected 3 for xyz or >= 6 for xyz+rgb)"
        )
    xyz = pc.data[:, :3]
    lo = xyz.min(axis=0)
    hi = xyz.max(axis=0)
    extent = hi - lo
    nx, ix = _grid_cells(xyz[:, 0], lo[0], extent[0], block_xy)
    ny, iy = _grid_cells(xyz[:, 1], lo[1], extent[1], block_xy)
    cells = ix * ny + iy

    if pc.f >= 6:
        rgb = pc.data[:, 3:6] / 255.0
    else:
        rgb = np.zeros((pc.n, 3))
    denom = np.where(extent > 0, extent, 1.0)
    rel_pos = np.where(extent > 0, (xyz - lo) / denom, 0.0)

    rng = _rng(seed)
    blocks = []
    for cell in np.unique(cells):
        member = np.flatnonzero(cells == cell)
        if member.size < min_points:
            continue
        block_min = xyz[member].min(axis=0)
        feats = np.concatenate(
            [xyz[member] - block_min, rgb[member], rel_pos[member]], axis=1
        )
        labels = pc.labels[member] if pc.labels is not None else None
        block = PointCloud(feats, labels=labels, class_count=pc.class_count)
        blocks.append(resample(block, points_per_block, int(rng.integers(2 ** 63))))
    return blocks


# ---------------------------------------------------------------------------
# triangle meshes
# ---------------------------------------------------------------------------

def load_mesh(path):
    """Parse a minimal triangle-soup text file.

    Lines ``v x y z`` declare vertices, lines ``f i j k`` declare
    triangles by 1-based vertex index, ``#`` starts a comment.  Returns
    ``(vertices, faces)`` arrays.
    """
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "v" and len(parts) == 4:
                    verts.append([float(p) for p in parts[1:]])
                elif parts[0] == "f" and len(parts) == 4:
                    faces.append([int(p) - 1 for p in parts[1:]])
                else:
                    raise ParseError(f"line {lineno}: expected 'v x y z' or 'f i j k'")
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
    if not verts or not faces:
        raise ParseError(f"{path}: mesh needs at least one vertex and one face")
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if faces.min() < 0 or faces.max() >= len(verts):
        raise ParseError(f"{path}: face index out of range")
    return verts, faces


def sample_mesh(verts: np.ndarray, faces: np.ndarray, n_points: int,
                seed: int) -> PointCloud:
    """Sample points uniformly over mesh surface area.

    Faces are chosen with probability proportional to their area, then a
    point is placed uniformly inside the chosen triangle.
    """
    if n_points < 1:
        raise ArgumentError(f"n_points must be >= 1, got {n_points}")
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ArgumentError("mesh has zero total surface area")
    rng = _rng(seed)
    face_idx = rng.choice(len(faces), size=n_points, p=areas / total)
    u = rng.uniform(size=(n_points, 1))
    v = rng.uniform(size=(n_points, 1))
    flip = (u + v) > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    pts = a[face_idx] + u * (b[face_idx] - a[face_idx]) + v * (c[face_idx] - a[face_idx])
    return PointCloud(pts)
