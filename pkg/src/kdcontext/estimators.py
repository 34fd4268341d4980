"""Estimator front end: fit/predict objects over the functional core.

Both estimators follow the scikit-learn protocol (keyword-only
constructor that stores hyperparameters verbatim, ``get_params`` /
``set_params``, attributes learned by ``fit`` carrying a trailing
underscore) so they compose with generic model-selection tooling
without this package depending on scikit-learn itself.
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import ArgumentError, DataError
from .network import NetworkConfig, forward_batch, init_params
from .kdtree import build
from .pointcloud import PointCloud, resample
from .training import TrainConfig, evaluate, predict_labels, train
from .validation import as_clouds, check_is_fitted, check_sample_labels


class BaseEstimator:
    """get_params/set_params over the constructor signature."""

    @classmethod
    def _param_names(cls):
        signature = inspect.signature(cls.__init__)
        return [name for name, p in signature.parameters.items()
                if name != "self" and p.kind != p.VAR_KEYWORD]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ArgumentError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class _CloudEstimator(BaseEstimator):
    task = None

    def __init__(self, *, depth=8, width_scale=0.25, region_sizes=None, epochs=80,
                 batch_size=16, learning_rate=1e-3, lr_decay=0.7, lr_decay_every=20,
                 dropout=0.5, local_cues=True, global_cues=True, dense_connections=True,
                 hierarchical_aggregation=True, rotate=False, jitter_sigma=0.0,
                 jitter_clip=0.05, early_stop_metric=None, seed=0):
        self.depth = depth
        self.width_scale = width_scale
        self.region_sizes = region_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.dropout = dropout
        self.local_cues = local_cues
        self.global_cues = global_cues
        self.dense_connections = dense_connections
        self.hierarchical_aggregation = hierarchical_aggregation
        self.rotate = rotate
        self.jitter_sigma = jitter_sigma
        self.jitter_clip = jitter_clip
        self.early_stop_metric = early_stop_metric
        self.seed = seed

    # -- shared plumbing ---------------------------------------------------

    def _network_config(self, class_count, in_features) -> NetworkConfig:
        return NetworkConfig.for_task(
            self.task, depth=self.depth, class_count=class_count,
            in_features=in_features, width_scale=self.width_scale,
            region_sizes=self.region_sizes, dropout=self.dropout,
            local_cues=self.local_cues, global_cues=self.global_cues,
            dense_connections=self.dense_connections,
            hierarchical_aggregation=self.hierarchical_aggregation,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every, seed=self.seed, rotate=self.rotate,
            jitter_sigma=self.jitter_sigma, jitter_clip=self.jitter_clip,
            early_stop_metric=self.early_stop_metric,
        )

    def _resample_all(self, clouds, allow_resample=True):
        target = 1 << self.depth
        out = []
        for i, pc in enumerate(clouds):
            if pc.n != target:
                if not allow_resample:
                    raise DataError(
                        f"cloud {i} has {pc.n} points; expected {target} (2**depth)"
                    )
                pc = resample(pc, target, seed=self.seed + i)
            out.append(pc)
        return out

    def _fit_network(self, data, class_count, eval_data=None):
        self.config_ = self._network_config(class_count, data[0].f)
        params = init_params(self.config_, seed=self.seed)
        self.params_, self.history_ = train(self.config_, params, data,
                                            self._train_config(), eval_data=eval_data)
        self.n_features_in_ = data[0].f
        return self


class PointCloudClassifier(_CloudEstimator):
    """Whole-cloud classifier.

    ``fit`` takes a sequence of clouds (or a ``(samples, points,
    features)`` array) and one class label per cloud; clouds are
    resampled to ``2**depth`` points automatically.
    """

    task = "classify"

    def fit(self, X, y):
        clouds = as_clouds(X)
        y = check_sample_labels(y, len(clouds))
        self.classes_ = np.unique(y)
        index_of = {c: i for i, c in enumerate(self.classes_)}
        encoded = np.array([index_of[c] for c in y])
        data = []
        for pc, label in zip(clouds, encoded):
            labels = np.full(pc.n, label, dtype=np.int64)
            data.append(PointCloud(pc.data, labels=labels, class_count=len(self.classes_)))
        data = self._resample_all(data)
        return self._fit_network(data, len(self.classes_))

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        clouds = self._resample_all(as_clouds(X))
        pred = predict_labels(self.config_, self.params_, clouds)
        return self.classes_[np.asarray(pred)]

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self)
        clouds = self._resample_all(as_clouds(X))
        probs = []
        for start in range(0, len(clouds), 32):
            chunk = clouds[start:start + 32]
            trees = [build(pc) for pc in chunk]
            logits = forward_batch(self.config_, self.params_, chunk, trees).value
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            probs.append(e / e.sum(axis=1, keepdims=True))
        return np.concatenate(probs, axis=0)

    def score(self, X, y) -> float:
        """Mean accuracy."""
        y = check_sample_labels(y, len(as_clouds(X)))
        return float((self.predict(X) == y).mean())

    def transform(self, X) -> np.ndarray:
        """Global signature vector per cloud (the pooled representation
        feeding the fully connected head)."""
        check_is_fitted(self)
        clouds = self._resample_all(as_clouds(X))
        out = []
        for start in range(0, len(clouds), 32):
            chunk = clouds[start:start + 32]
            trees = [build(pc) for pc in chunk]
            collect: dict = {}
            forward_batch(self.config_, self.params_, chunk, trees, collect=collect)
            out.append(collect["signature"])
        return np.concatenate(out, axis=0)


class PointCloudSegmenter(_CloudEstimator):
    """Per-point labeler.

    ``fit`` accepts labels either inside the clouds or as ``y``, a
    sequence of per-point label arrays.  ``predict`` requires clouds of
    exactly ``2**depth`` points (per-point output must stay aligned with
    the input points, so no silent resampling).
    """

    task = "segment"

    def fit(self, X, y=None):
        clouds = as_clouds(X, labels=y)
        for i, pc in enumerate(clouds):
            if pc.labels is None:
                raise DataError(f"cloud {i} has no per-point labels and y was not given")
        self.classes_ = np.unique(np.concatenate([pc.labels for pc in clouds]))
        index_of = {c: i for i, c in enumerate(self.classes_)}
        data = []
        for pc in clouds:
            encoded = np.array([index_of[c] for c in pc.labels])
            data.append(PointCloud(pc.data, labels=encoded, class_count=len(self.classes_)))
        data = self._resample_all(data)
        return self._fit_network(data, len(self.classes_))

    def predict(self, X) -> list:
        check_is_fitted(self)
        clouds = self._resample_all(as_clouds(X), allow_resample=False)
        pred = predict_labels(self.config_, self.params_, clouds)
        return [self.classes_[p] for p in pred]

    def score(self, X, y=None) -> float:
        """Mean intersection-over-union over all points."""
        check_is_fitted(self)
        clouds = as_clouds(X, labels=y)
        index_of = {c: i for i, c in enumerate(self.classes_)}
        data = []
        for i, pc in enumerate(clouds):
            if pc.labels is None:
                raise DataError(f"cloud {i} has no labels to score against")
            encoded = np.array([index_of.get(c, -1) for c in pc.labels])
            if (encoded < 0).any():
                raise DataError(f"cloud {i} contains labels unseen during fit")
            data.append(PointCloud(pc.data, labels=encoded, class_count=len(self.classes_)))
        data = self._resample_all(data, allow_resample=False)
        return float(evaluate(self.config_, self.params_, data).mean_iou)

    def transform(self, X) -> list:
        """Per-point feature matrices from the learning stage, aligned with
        each cloud's input order."""
        check_is_fitted(self)
        from .network import feature_learning

        clouds = self._resample_all(as_clouds(X), allow_resample=False)
        return [feature_learning(self.config_, self.params_, pc, build(pc)).value
                for pc in clouds]
