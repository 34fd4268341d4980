"""Mini-batch training with adaptive-moment updates, plus evaluation.

Training stacks whole batches of tree-ordered clouds into one graph per
step, so a batch costs one forward, one backward, and one optimizer
update.  A single PCG64 stream seeded from the train config drives
batch shuffling, augmentation, and dropout, making runs bit-reproducible
under a fixed seed.

Whole-cloud classification labels are stored as constant per-point
label vectors (see :func:`cloud_label`); segmentation labels are
per-point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, cross_entropy
from .errors import ArgumentError, DataError, DivergenceError
from .kdtree import build
from .metrics import MetricsReport, confusion_matrix, metrics_from_confusion
from .network import NetworkConfig, forward_stacked, stack_clouds, zero_grads
from .pointcloud import PointCloud, augment


@dataclass
class TrainConfig:
    """Optimizer, schedule, and augmentation settings for one run."""

    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_decay: float = 0.7
    lr_decay_every: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    rotate: bool = False
    jitter_sigma: float = 0.0
    jitter_clip: float = 0.05
    eval_every: int = 1
    early_stop_metric: float | None = None
    class_weights: tuple | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ArgumentError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.lr_decay <= 0:
            raise ArgumentError(f"lr_decay must be > 0, got {self.lr_decay}")
        if self.lr_decay_every < 1:
            raise ArgumentError(f"lr_decay_every must be >= 1, got {self.lr_decay_every}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ArgumentError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ArgumentError(f"epsilon must be > 0, got {self.epsilon}")
        if self.eval_every < 1:
            raise ArgumentError(f"eval_every must be >= 1, got {self.eval_every}")


class AdamState:
    """First and second moment buffers plus the step counter."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, lr: float, beta1: float, beta2: float,
             epsilon: float) -> None:
        """One bias-corrected update; missing gradients count as zero."""
        self.t += 1
        bc1 = 1.0 - beta1 ** self.t
        bc2 = 1.0 - beta2 ** self.t
        for key, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            m = self.m.get(key)
            v = self.v.get(key)
            if m is None:
                m = np.zeros_like(p.value)
                v = np.zeros_like(p.value)
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            self.m[key] = m
            self.v[key] = v
            p.value -= (lr * (m / bc1) / (np.sqrt(v / bc2) + epsilon)).astype(p.value.dtype)
            p.grad = None


def cloud_label(pc: PointCloud) -> int:
    """Whole-cloud class of a classification sample (constant label vector)."""
    if pc.labels is None:
        raise DataError("cloud carries no labels")
    first = int(pc.labels[0])
    if not (pc.labels == first).all():
        raise DataError("classification cloud has non-constant point labels")
    return first


def _check_data(cfg: NetworkConfig, data, what: str):
    if not data:
        raise ArgumentError(f"{what} dataset is empty")
    for pc in data:
        if pc.labels is None:
            raise DataError(f"{what} cloud carries no labels")
        if pc.labels.max() >= cfg.class_count:
            raise DataError(
                f"label {int(pc.labels.max())} out of range for class_count={cfg.class_count}"
            )
        if pc.n != cfg.n_points:
            raise DataError(
                f"{what} cloud has {pc.n} points, config expects {cfg.n_points}; resample first"
            )


class _Sample:
    """Tree-ordered cache of one training cloud."""

    __slots__ = ("stacked", "labels")

    def __init__(self, cfg, pc):
        tree = build(pc)
        self.stacked = stack_clouds(cfg, [pc], [tree])
        if cfg.task == "classify":
            self.labels = np.array([cloud_label(pc)], dtype=np.int64)
        else:
            self.labels = pc.labels[tree.order]


def _snapshot(params: dict) -> dict:
    return {k: Tensor(p.value.copy(), requires_grad=True) for k, p in params.items()}


def train(cfg: NetworkConfig, params: dict, data, train_cfg: TrainConfig,
          eval_data=None, epoch_offset: int = 0):
    """Optimize ``params`` in place; returns ``(best_params, history)``.

    ``history`` holds one dict per epoch with keys epoch, loss, accuracy,
    mean_iou, lr; accuracy and mean IoU come from the training-pass
    predictions themselves (dropout active).  When ``eval_data`` is given
    the best parameters by held-out metric (accuracy for classification,
    mean IoU for segmentation) are returned; otherwise the final ones.
    Stops early once the running train metric reaches
    ``early_stop_metric``.
    """
    _check_data(cfg, data, "train")
    if eval_data is not None:
        _check_data(cfg, eval_data, "eval")
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    augment_on = train_cfg.rotate or train_cfg.jitter_sigma > 0
    cache = None if augment_on else [_Sample(cfg, pc) for pc in data]

    state = AdamState()
    history = []
    best_metric = -np.inf
    best_params = None
    key_metric = "accuracy" if cfg.task == "classify" else "mean_iou"

    for epoch in range(train_cfg.epochs):
        absolute = epoch_offset + epoch
        lr = train_cfg.learning_rate * train_cfg.lr_decay ** (absolute // train_cfg.lr_decay_every)
        order = rng.permutation(len(data))
        loss_sum = 0.0
        confusion = np.zeros((cfg.class_count, cfg.class_count), dtype=np.int64)

        for batch_no, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            if augment_on:
                samples = []
                for i in idx:
                    pc = augment(data[i], train_cfg.rotate, train_cfg.jitter_sigma,
                                 train_cfg.jitter_clip, int(rng.integers(2 ** 63)))
                    samples.append(_Sample(cfg, pc))
            else:
                samples = [cache[i] for i in idx]
            stacked = np.concatenate([s.stacked for s in samples], axis=0)
            labels = np.concatenate([s.labels for s in samples])

            logits = forward_stacked(cfg, params, stacked, len(idx), training=True, rng=rng)
            loss = cross_entropy(logits, labels, class_weights=train_cfg.class_weights)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                zero_grads(params)
                raise DivergenceError(
                    f"non-finite loss at epoch {absolute + 1}, batch {batch_no}",
                    epoch=absolute + 1, batch=batch_no,
                )
            loss.backward()
            state.step(params, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon)

            loss_sum += loss_value * len(idx)
            confusion += confusion_matrix(labels, logits.value.argmax(axis=1),
                                          cfg.class_count)

        report = metrics_from_confusion(confusion)
        entry = {
            "epoch": absolute + 1,
            "loss": loss_sum / len(data),
            "accuracy": report.overall_accuracy,
            "mean_iou": report.mean_iou,
            "lr": lr,
        }
        history.append(entry)

        if eval_data is not None and (epoch + 1) % train_cfg.eval_every == 0:
            ev = evaluate(cfg, params, eval_data)
            metric = ev.overall_accuracy if cfg.task == "classify" else ev.mean_iou
            if metric > best_metric:
                best_metric = metric
                best_params = _snapshot(params)

        if (train_cfg.early_stop_metric is not None
                and entry[key_metric] >= train_cfg.early_stop_metric):
            break

    return (best_params if best_params is not None else params), history


def history_lines(history) -> str:
    """Tab-separated per-epoch log: ``epoch loss acc miou lr``."""
    lines = ["%d\t%.6f\t%.4f\t%.4f\t%.6g"
             % (h["epoch"], h["loss"], h["accuracy"], h["mean_iou"], h["lr"])
             for h in history]
    return "\n".join(lines) + ("\n" if lines else "")


def predict_labels(cfg: NetworkConfig, params: dict, data, batch_size: int = 32):
    """Predicted class per cloud (classification) or per point in original
    order (segmentation)."""
    if not data:
        raise ArgumentError("no clouds to predict")
    out = []
    for start in range(0, len(data), batch_size):
        chunk = list(data[start:start + batch_size])
        trees = [build(pc) for pc in chunk]
        logits = forward_stacked(cfg, params, stack_clouds(cfg, chunk, trees), len(chunk))
        pred = logits.value.argmax(axis=1)
        if cfg.task == "classify":
            out.extend(int(p) for p in pred)
        else:
            n = cfg.n_points
            for j, tree in enumerate(trees):
                out.append(pred[j * n:(j + 1) * n][tree.perm])
    return out


def evaluate(cfg: NetworkConfig, params: dict, data, batch_size: int = 32) -> MetricsReport:
    """Confusion-matrix metrics over samples (classification) or all
    points (segmentation)."""
    if not data:
        raise ArgumentError("evaluation dataset is empty")
    _check_data(cfg, data, "eval")
    predictions = predict_labels(cfg, params, data, batch_size=batch_size)
    if cfg.task == "classify":
        true = np.array([cloud_label(pc) for pc in data])
        pred = np.array(predictions)
    else:
        true = np.concatenate([pc.labels for pc in data])
        pred = np.concatenate(predictions)
    return metrics_from_confusion(confusion_matrix(true, pred, cfg.class_count))
