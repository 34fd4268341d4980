"""Synthetic shape datasets for desk-scale experiments.

Two generators are provided: ``classify4`` draws clouds from four
primitive surfaces (sphere, cube, cylinder, two-plane cross) labeled by
shape, and ``segment2`` builds composite clouds of a hemispherical dome
resting on a square plane with per-point part labels.  Every sample is
independently rotated about the z axis and scaled by a uniform factor in
[0.8, 1.2]; all draws come from one PCG64 stream so a seed pins the
whole dataset.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError
from .pointcloud import PointCloud, rotate_z

DOME_RADIUS = 0.7


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def sphere_surface(rng, n: int) -> np.ndarray:
    """n points uniform on the unit sphere centered at the origin."""
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw is measure-zero; guard against division blowup anyway
    norms[norms < 1e-12] = 1.0
    return v / norms


def cube_surface(rng, n: int) -> np.ndarray:
    """n points uniform on the surface of the axis-aligned cube [-1, 1]^3."""
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for ax in range(3):
        on = axis == ax
        others = [a for a in range(3) if a != ax]
        pts[on, ax] = sign[on]
        pts[on, others[0]] = uv[on, 0]
        pts[on, others[1]] = uv[on, 1]
    return pts


def cylinder_surface(rng, n: int) -> np.ndarray:
    """n points uniform on the lateral surface of a radius-1, height-2 cylinder."""
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    z = rng.uniform(-1.0, 1.0, size=n)
    return np.stack([np.cos(theta), np.sin(theta), z], axis=1)


def cross_planes(rng, n: int) -> np.ndarray:
    """n points on two unit squares crossing at right angles along the z axis."""
    half = n // 2
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.zeros((n, 3))
    pts[:half, 0] = uv[:half, 0]
    pts[:half, 2] = uv[:half, 1]
    pts[half:, 1] = uv[half:, 0]
    pts[half:, 2] = uv[half:, 1]
    return pts


CLASSIFY4_SHAPES = (sphere_surface, cube_surface, cylinder_surface, cross_planes)
CLASSIFY4_NAMES = ("sphere", "cube", "cylinder", "cross")


def plane_dome(rng, n: int):
    """Square plane at z=0 (part 0) with a hemispherical dome on top (part 1)."""
    n_dome = n // 2
    n_plane = n - n_dome
    plane = np.zeros((n_plane, 3))
    plane[:, :2] = rng.uniform(-1.0, 1.0, size=(n_plane, 2))
    dome = sphere_surface(rng, n_dome)
    dome[:, 2] = np.abs(dome[:, 2])
    dome *= DOME_RADIUS
    pts = np.concatenate([plane, dome], axis=0)
    labels = np.concatenate([np.zeros(n_plane, dtype=np.int64),
                             np.ones(n_dome, dtype=np.int64)])
    return pts, labels


def make_synthetic(kind: str, n_points: int, n_samples: int, seed: int) -> list[PointCloud]:
    """Generate ``n_samples`` labeled clouds of ``n_points`` points each.

    ``classify4`` assigns shape classes round-robin (sample i gets class
    ``i % 4``) and stores the class as a constant per-point label vector,
    the convention used throughout for whole-cloud labels.  ``segment2``
    labels every point by part.
    """
    if n_points < 1 or (n_points & (n_points - 1)) != 0:
        raise ArgumentError(f"n_points must be a power of two, got {n_points}")
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be >= 1, got {n_samples}")
    if kind not in ("classify4", "segment2"):
        raise ArgumentError(f"unknown synthetic kind {kind!r}")

    rng = _rng(seed)
    samples = []
    for i in range(n_samples):
        if kind == "classify4":
            shape_id = i % 4
            pts = CLASSIFY4_SHAPES[shape_id](rng, n_points)
            labels = np.full(n_points, shape_id, dtype=np.int64)
            class_count = 4
        else:
            pts, labels = plane_dome(rng, n_points)
            class_count = 2
        angle = rng.uniform(0.0, 2.0 * math.pi)
        scale = rng.uniform(0.8, 1.2)
        pts = rotate_z(pts, angle) * scale
        samples.append(PointCloud(pts, labels=labels, class_count=class_count))
    return samples
