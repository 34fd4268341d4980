"""Balanced k-d trees over point coordinates.

A cloud of exactly ``2**depth`` points is split recursively at the
median: every node picks the coordinate axis with the largest spread
(max minus min, ties resolved toward the lower axis index), orders its
points by (axis value, x, y, z, original index), and sends the lower
half to the left child.  The node at depth ``d`` with ordinal ``k``
therefore owns the contiguous tree-order slice
``[k * 2**(depth-d), (k+1) * 2**(depth-d))``.

Because the ordering depends only on coordinates (the original index
only breaks ties between exact duplicates), clouds with pairwise
distinct coordinates produce the same partition regardless of input
order.  Splitting axes are recorded for inspection but never fed to the
network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, SizeError
from .pointcloud import PointCloud


@dataclass(frozen=True)
class KdTree:
    """Balanced binary partition of ``2**depth`` points.

    ``perm`` maps an original point index to its tree-order position;
    ``order`` is the inverse (tree position to original index).
    ``split_axes`` stores one axis per internal node, level-ordered, so
    node (d, k) sits at flat index ``2**d - 1 + k``.
    """

    depth: int
    perm: np.ndarray
    order: np.ndarray
    split_axes: np.ndarray

    @property
    def n(self) -> int:
        return self.perm.size

    def slice_of(self, depth: int, ordinal: int):
        """(start, length) of the tree-order slice owned by node (depth, ordinal)."""
        self._check_node(depth, ordinal)
        length = self.n >> depth
        return ordinal * length, length

    def children(self, depth: int, ordinal: int):
        """Ordinals of the two children of an internal node at depth+1."""
        if depth >= self.depth:
            raise ArgumentError(f"node at depth {depth} has no children (tree depth {self.depth})")
        self._check_node(depth, ordinal)
        return 2 * ordinal, 2 * ordinal + 1

    def split_axis(self, depth: int, ordinal: int) -> int:
        """Recorded split axis of an internal node."""
        if depth >= self.depth:
            raise ArgumentError(f"node at depth {depth} is a leaf")
        self._check_node(depth, ordinal)
        return int(self.split_axes[(1 << depth) - 1 + ordinal])

    def level_partition(self, region_size: int) -> "LevelPartition":
        return level_partition(self, region_size)

    def iter_nodes(self):
        """Yield (depth, ordinal, axis, slice_start, slice_len) for every node.

        Leaves report axis -1.
        """
        for d in range(self.depth + 1):
            length = self.n >> d
            for k in range(1 << d):
                axis = int(self.split_axes[(1 << d) - 1 + k]) if d < self.depth else -1
                yield d, k, axis, k * length, length

    def _check_node(self, depth, ordinal):
        if not (0 <= depth <= self.depth):
            raise ArgumentError(f"depth {depth} out of range [0, {self.depth}]")
        if not (0 <= ordinal < (1 << depth)):
            raise ArgumentError(f"ordinal {ordinal} out of range at depth {depth}")


@dataclass(frozen=True)
class LevelPartition:
    """Equal-size grouping of points induced by one tree level.

    ``membership[i]`` is the region ordinal of original point ``i``; in
    tree order the regions are simply consecutive runs of
    ``region_size`` positions.
    """

    region_size: int
    region_count: int
    membership: np.ndarray

    def region_members(self, region: int) -> np.ndarray:
        """Original indices of the points in one region."""
        if not (0 <= region < self.region_count):
            raise ArgumentError(f"region {region} out of range")
        return np.flatnonzero(self.membership == region)


def build(pc) -> KdTree:
    """Build a balanced k-d tree over a PointCloud or an (n, >=3) array."""
    coords = pc.xyz if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)[:, :3]
    n = coords.shape[0]
    if n < 1 or (n & (n - 1)) != 0:
        raise SizeError(f"point count must be a power of two, got {n} (resample first)")
    if not np.isfinite(coords).all():
        raise ArgumentError("coordinates must be finite")
    depth = n.bit_length() - 1

    order = np.arange(n)
    split_axes = np.empty(n - 1, dtype=np.int8) if n > 1 else np.empty(0, dtype=np.int8)
    for d in range(depth):
        nodes = 1 << d
        size = n >> d
        c = coords[order]
        grouped = c.reshape(nodes, size, 3)
        spread = grouped.max(axis=1) - grouped.min(axis=1)
        axes = spread.argmax(axis=1)  # argmax takes the first max: lowest axis wins ties
        split_axes[nodes - 1:2 * nodes - 1] = axes
        node_of_row = np.repeat(np.arange(nodes), size)
        axis_value = c[np.arange(n), axes[node_of_row]]
        resort = np.lexsort((order, c[:, 2], c[:, 1], c[:, 0], axis_value, node_of_row))
        order = order[resort]

    perm = np.empty(n, dtype=np.int64)
    perm[order] = np.arange(n)
    return KdTree(depth=depth, perm=perm, order=order, split_axes=split_axes)


def level_partition(tree: KdTree, region_size: int) -> LevelPartition:
    """Partition points into contiguous tree-order regions of ``region_size``."""
    n = tree.n
    if region_size < 1 or (region_size & (region_size - 1)) != 0:
        raise ArgumentError(f"region_size must be a power of two, got {region_size}")
    if region_size > n:
        raise ArgumentError(f"region_size {region_size} exceeds point count {n}")
    membership = tree.perm // region_size
    return LevelPartition(region_size=region_size, region_count=n // region_size,
                          membership=membership)


def children(tree: KdTree, depth: int, ordinal: int):
    """Child ordinals (2k, 2k+1) of node (depth, k)."""
    return tree.children(depth, ordinal)


def dump_nodes(tree: KdTree) -> str:
    """One line per node: ``depth ordinal axis slice_start slice_len``."""
    lines = ["%d %d %d %d %d" % node for node in tree.iter_nodes()]
    return "\n".join(lines) + "\n"
