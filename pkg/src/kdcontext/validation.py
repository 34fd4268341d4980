"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, DataError
from .pointcloud import PointCloud


def as_clouds(X, labels=None) -> list[PointCloud]:
    """Coerce estimator input into a list of point clouds.

    Accepts a list of :class:`PointCloud`, a list of ``(n, f)`` arrays,
    or one ``(samples, n, f)`` array.  ``labels`` optionally supplies
    per-point label arrays, one per cloud.
    """
    if isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise ArgumentError(
                f"array input must have shape (samples, points, features), got {X.shape}"
            )
        X = list(X)
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ArgumentError("X must be a non-empty sequence of point clouds")
    if labels is not None and len(labels) != len(X):
        raise DataError(f"got {len(X)} clouds but {len(labels)} label vectors")
    clouds = []
    for i, item in enumerate(X):
        if isinstance(item, PointCloud):
            pc = item
            if labels is not None:
                pc = PointCloud(pc.data, labels=np.asarray(labels[i]),
                                class_count=pc.class_count)
        else:
            pc = PointCloud(np.asarray(item),
                            labels=None if labels is None else np.asarray(labels[i]))
        clouds.append(pc)
    return clouds


def check_sample_labels(y, n_samples: int) -> np.ndarray:
    """Validate one integer class label per sample."""
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise DataError(f"y must be a length-{n_samples} vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == y.astype(np.int64)):
            raise DataError("class labels must be integers")
    return y.astype(np.int64)


def check_is_fitted(estimator, attribute: str = "params_") -> None:
    if not hasattr(estimator, attribute):
        raise ArgumentError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )


def check_power_of_two(value: int, name: str) -> int:
    value = int(value)
    if value < 1 or value & (value - 1):
        raise ArgumentError(f"{name} must be a power of two, got {value}")
    return value
