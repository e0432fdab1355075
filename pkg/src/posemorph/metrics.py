"""Confusion-matrix accumulation and mean intersection-over-union.

IoU is pixel-aggregated: one confusion matrix is summed over the whole
dataset and IoU is computed from the totals, rather than averaging
per-image scores. Matrices are plain monoids — accumulate per image in any
order (or in parallel) and merge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ClassOutOfRange, EmptyMatrix, ShapeMismatch
from .segmentation import LabelMap


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel tallies, shape (classes, classes); rows = ground truth, columns = prediction."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square, got shape {counts.shape}")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        if num_classes < 1:
            raise ValueError("need at least one class")
        return cls(counts=np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeMismatch(
                f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices"
            )
        return ConfusionMatrix(counts=self.counts + other.counts)

    __add__ = merge


def accumulate(cm: ConfusionMatrix, pred: LabelMap, gt: LabelMap) -> ConfusionMatrix:
    """Fold one image pair into the matrix; returns the updated matrix."""
    if pred.labels.shape != gt.labels.shape:
        raise ShapeMismatch(
            f"prediction {pred.labels.shape} vs ground truth {gt.labels.shape}"
        )
    c = cm.num_classes
    if pred.num_classes > c or gt.num_classes > c:
        raise ClassOutOfRange(
            f"label maps declare up to {max(pred.num_classes, gt.num_classes)} "
            f"classes, matrix has {c}"
        )
    flat = gt.labels.ravel() * c + pred.labels.ravel()
    counts = np.bincount(flat, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(counts=cm.counts + counts)


def mean_iou(cm: ConfusionMatrix) -> tuple[list[float], float]:
    """Per-class IoU (diag / union) and their mean.

    Classes absent from both prediction and ground truth get NaN in the
    per-class list and are excluded from the mean; background is an
    ordinary class. An all-zero matrix (nothing evaluated) raises
    EmptyMatrix.
    """
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no pixels")
    diag = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - np.diag(cm.counts)
    present = union > 0
    per_class = np.full(cm.num_classes, np.nan)
    per_class[present] = diag[present] / union[present]
    return per_class.tolist(), float(per_class[present].mean())


def format_iou_table(
    rows: Sequence[tuple[str, Sequence[float], float]],
    class_names: Sequence[str],
) -> str:
    """Plain-text table of per-class IoU and mIoU, values scaled to 0-100.

    Each row is (label, per_class, mean); NaN per-class entries (class
    absent everywhere) print as a dash.
    """
    header = ["strategy"] + list(class_names) + ["mIoU"]
    body = []
    for label, per_class, mean in rows:
        cells = [label]
        for value in per_class:
            cells.append("-" if np.isnan(value) else f"{100.0 * value:.2f}")
        cells.append(f"{100.0 * mean:.2f}")
        body.append(cells)
    widths = [
        max(len(row[col]) for row in [header] + body)
        for col in range(len(header))
    ]
    lines = []
    for row in [header] + body:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def iou_report(
    rows: Sequence[tuple[str, Sequence[float], float]],
    class_names: Sequence[str],
) -> dict:
    """Machine-readable counterpart of format_iou_table (values in [0,1])."""
    return {
        "classes": list(class_names),
        "results": [
            {
                "strategy": label,
                "per_class": [None if np.isnan(v) else v for v in per_class],
                "mean_iou": mean,
            }
            for label, per_class, mean in rows
        ],
    }


def write_reports(
    rows: Sequence[tuple[str, Sequence[float], float]],
    class_names: Sequence[str],
    text_path,
    json_path,
) -> str:
    """Write the text and JSON reports; returns the text table."""
    table = format_iou_table(rows, class_names)
    with open(text_path, "w") as fh:
        fh.write(table)
    with open(json_path, "w") as fh:
        json.dump(iou_report(rows, class_names), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table
