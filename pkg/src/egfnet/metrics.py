"""Confusion matrix, per-class accuracy/IoU and their class means."""

from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np


class ConfusionMatrix:
    """``counts[t, p]`` = number of pixels with ground truth t predicted as p."""

    def __init__(self, num_classes: int, counts: Optional[np.ndarray] = None):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64) if counts is None \
            else np.asarray(counts, dtype=np.int64).copy()
        if self.counts.shape != (num_classes, num_classes) or (self.counts < 0).any():
            raise ValueError("counts must be a non-negative CxC integer matrix")

    def accumulate(self, pred_labels, gt_labels) -> "ConfusionMatrix":
        pred = np.asarray(pred_labels).reshape(-1)
        gt = np.asarray(gt_labels).reshape(-1)
        if np.shape(pred_labels) != np.shape(gt_labels):
            raise ValueError("prediction and ground truth shapes differ")
        c = self.num_classes
        for arr in (pred, gt):
            if arr.size and (arr.min() < 0 or arr.max() >= c):
                raise ValueError("label out of range")
        if pred.size:
            flat = gt.astype(np.int64) * c + pred.astype(np.int64)
            self.counts += np.bincount(flat, minlength=c * c).reshape(c, c)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices of different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def pixel_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")


def accumulate(cm: ConfusionMatrix, pred_labels, gt_labels) -> ConfusionMatrix:
    return cm.accumulate(pred_labels, gt_labels)


def per_class(cm: ConfusionMatrix):
    """Per-class recall and IoU; NaN marks a class with a zero denominator."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    union = rows + cols - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(rows > 0, tp / np.where(rows > 0, rows, 1.0), np.nan)
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1.0), np.nan)
    return acc, iou


def mean_present(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    keep = ~np.isnan(v)
    return float(v[keep].mean()) if keep.any() else float("nan")


def summarize_per_class(acc: Sequence[float], iou: Sequence[float]):
    """(mAcc, mIoU): unweighted means over the classes that have a value."""
    return mean_present(acc), mean_present(iou)


def summary(cm: ConfusionMatrix):
    return summarize_per_class(*per_class(cm))


def _clean(x: float) -> Optional[float]:
    return None if np.isnan(x) else float(x)


def report(cm: ConfusionMatrix, class_names: Optional[Sequence[str]] = None) -> dict:
    names = list(class_names) if class_names is not None else [f"class{c}" for c in range(cm.num_classes)]
    acc, iou = per_class(cm)
    macc, miou = summary(cm)
    return {
        "per_class": [{"name": n, "acc": _clean(a), "iou": _clean(i)} for n, a, i in zip(names, acc, iou)],
        "macc": _clean(macc),
        "miou": _clean(miou),
        "pixel_accuracy": _clean(cm.pixel_accuracy()),
    }


def report_json(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=False) + "\n"


def format_table(rep: dict) -> str:
    def fmt(v):
        return "   -  " if v is None else f"{100 * v:6.2f}"

    width = max([5] + [len(r["name"]) for r in rep["per_class"]])
    lines = [f"{'class':<{width}}  {'Acc':>6}  {'IoU':>6}"]
    for r in rep["per_class"]:
        lines.append(f"{r['name']:<{width}}  {fmt(r['acc'])}  {fmt(r['iou'])}")
    lines.append(f"{'mean':<{width}}  {fmt(rep['macc'])}  {fmt(rep['miou'])}")
    return "\n".join(lines) + "\n"
