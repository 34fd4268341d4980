"""K-d tree guided hierarchical point-cloud learning.

The package layers a scikit-learn style estimator API
(:class:`PointCloudClassifier`, :class:`PointCloudSegmenter`) over a
functional core: point-cloud IO and preprocessing, balanced k-d tree
partitioning, a minimal reverse-mode tensor engine, contextual feature
layers, the two-stage network, and training with evaluation metrics.
"""

__version__ = "0.1.0"

from .autodiff import Tensor
from .estimators import PointCloudClassifier, PointCloudSegmenter
from .kdtree import KdTree, LevelPartition, build as build_kdtree, level_partition
from .metrics import MetricsReport, confusion_matrix, metrics_from_confusion
from .network import NetworkConfig, forward, init_params, parameter_count
from .checkpoint import load_checkpoint, save_checkpoint
from .pointcloud import (PointCloud, augment, load_points, normalize_unit_sphere,
                         resample, save_points, split_blocks)
from .synthetic import make_synthetic
from .training import TrainConfig, evaluate, train

__all__ = [
    "__version__",
    "Tensor",
    "PointCloudClassifier",
    "PointCloudSegmenter",
    "KdTree",
    "LevelPartition",
    "build_kdtree",
    "level_partition",
    "MetricsReport",
    "confusion_matrix",
    "metrics_from_confusion",
    "NetworkConfig",
    "forward",
    "init_params",
    "parameter_count",
    "load_checkpoint",
    "save_checkpoint",
    "PointCloud",
    "augment",
    "load_points",
    "normalize_unit_sphere",
    "resample",
    "save_points",
    "split_blocks",
    "make_synthetic",
    "TrainConfig",
    "evaluate",
    "train",
]
