"""Evaluation metrics: confusion matrix, overall accuracy, average class
accuracy (mean per-class recall), and intersection-over-union."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError


@dataclass
class MetricsReport:
    """Summary of a labeled evaluation.

    ``per_class_iou`` holds NaN for classes absent from both prediction
    and ground truth; those classes are excluded from ``mean_iou``.
    ``confusion[true, pred]`` counts points (segmentation) or samples
    (classification).
    """

    overall_accuracy: float
    avg_class_accuracy: float
    per_class_iou: np.ndarray
    mean_iou: float
    confusion: np.ndarray


def confusion_matrix(true, pred, class_count: int) -> np.ndarray:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ArgumentError(f"shape mismatch: truth {true.shape} vs prediction {pred.shape}")
    if true.size == 0:
        raise ArgumentError("cannot build a confusion matrix from no labels")
    for name, v in (("truth", true), ("prediction", pred)):
        if v.min() < 0 or v.max() >= class_count:
            raise DataError(f"{name} label {int(v.max())} out of range for "
                            f"{class_count} classes")
    flat = true * class_count + pred
    counts = np.bincount(flat, minlength=class_count * class_count)
    return counts.reshape(class_count, class_count)


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    confusion = np.asarray(confusion, dtype=np.int64)
    total = confusion.sum()
    if total == 0:
        raise ArgumentError("empty confusion matrix")
    tp = np.diag(confusion).astype(np.float64)
    gt = confusion.sum(axis=1).astype(np.float64)   # row: ground truth count
    pr = confusion.sum(axis=0).astype(np.float64)   # column: prediction count
    union = gt + pr - tp

    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1.0), np.nan)
        recall = tp / np.where(gt > 0, gt, 1.0)

    present = gt > 0
    return MetricsReport(
        overall_accuracy=float(tp.sum() / total),
        avg_class_accuracy=float(recall[present].mean()) if present.any() else float("nan"),
        per_class_iou=iou,
        mean_iou=float(np.nanmean(iou)) if np.isfinite(iou).any() else float("nan"),
        confusion=confusion,
    )


def format_report(report: MetricsReport, class_names=None) -> str:
    """Human-readable metrics table."""
    k = report.confusion.shape[0]
    if class_names is None:
        class_names = [f"class {c}" for c in range(k)]
    lines = [
        f"overall accuracy    {report.overall_accuracy:.4f}",
        f"avg class accuracy  {report.avg_class_accuracy:.4f}",
        f"mean IoU            {report.mean_iou:.4f}",
        "per-class IoU:",
    ]
    for name, iou in zip(class_names, report.per_class_iou):
        value = "   n/a" if np.isnan(iou) else f"{iou:.4f}"
        lines.append(f"  {name:<16} {value}")
    return "\n".join(lines) + "\n"


def report_kv(report: MetricsReport) -> str:
    """Machine-readable ``key = value`` form of a metrics report."""
    lines = [
        f"overall_accuracy = {report.overall_accuracy:.6f}",
        f"avg_class_accuracy = {report.avg_class_accuracy:.6f}",
        f"mean_iou = {report.mean_iou:.6f}",
    ]
    for c, iou in enumerate(report.per_class_iou):
        lines.append(f"iou.{c} = " + ("nan" if np.isnan(iou) else f"{iou:.6f}"))
    return "\n".join(lines) + "\n"
