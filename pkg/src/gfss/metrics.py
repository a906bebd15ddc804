"""Confusion-matrix accumulation and intersection-over-union.

Works over any fixed id vocabulary: base training scores channel
indices, the episodic evaluator scores raw dataset class ids. Classes
that never occur (no true pixels, no predicted pixels) are excluded
from the mean rather than counted as zero.
"""

from __future__ import annotations

import numpy as np

from .splits import IGNORE_ID


class ConfusionMatrix:
    """Square count matrix indexed by (true class, predicted class)."""

    def __init__(self, class_ids):
        self.class_ids = tuple(int(i) for i in class_ids)
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("duplicate class ids")
        if IGNORE_ID in self.class_ids:
            raise ValueError(f"{IGNORE_ID} is the ignore marker, not a class")
        self._row = np.full(256, -1, dtype=np.int64)
        for row, cid in enumerate(self.class_ids):
            if not 0 <= cid < 256:
                raise ValueError(f"class id {cid} out of range")
            self._row[cid] = row
        self.counts = np.zeros((len(self.class_ids),) * 2, dtype=np.int64)

    def update(self, true: np.ndarray, predicted: np.ndarray,
               ignore_id: int = IGNORE_ID) -> None:
        true = np.asarray(true).reshape(-1)
        predicted = np.asarray(predicted).reshape(-1)
        if true.shape != predicted.shape:
            raise ValueError("true and predicted masks differ in size")
        keep = true != ignore_id
        t = self._row[true[keep].astype(np.int64)]
        p = self._row[predicted[keep].astype(np.int64)]
        if (t < 0).any():
            bad = sorted(set(true[keep][t < 0].tolist()))
            raise ValueError(f"true mask contains unknown class ids: {bad}")
        if (p < 0).any():
            bad = sorted(set(predicted[keep][p < 0].tolist()))
            raise ValueError(f"prediction contains unknown class ids: {bad}")
        n = len(self.class_ids)
        joint = np.bincount(t * n + p, minlength=n * n)
        self.counts += joint.reshape(n, n)

    def merge(self, other: "ConfusionMatrix") -> None:
        if other.class_ids != self.class_ids:
            raise ValueError("confusion matrices cover different classes")
        self.counts += other.counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_iou(conf: ConfusionMatrix) -> dict[int, float]:
    """IoU per class id; NaN marks classes absent from truth and predictions."""
    diag = np.diag(conf.counts).astype(np.float64)
    denom = conf.counts.sum(axis=1) + conf.counts.sum(axis=0) - np.diag(conf.counts)
    out: dict[int, float] = {}
    for row, cid in enumerate(conf.class_ids):
        out[cid] = float(diag[row] / denom[row]) if denom[row] > 0 else float("nan")
    return out

def miou(conf: ConfusionMatrix, class_ids=None) -> float:
    """Mean IoU over ``class_ids`` (default: every class the matrix covers).

    Degenerate classes (denominator zero) are left out of the mean;
    if every requested class is degenerate there is nothing to average
    and this raises.
    """
    if class_ids is None:
        class_ids = conf.class_ids
    ious = per_class_iou(conf)
    values = []
    for cid in class_ids:
        if cid not in ious:
            raise KeyError(f"class id {cid} not covered by this confusion matrix")
        if not np.isnan(ious[cid]):
            values.append(ious[cid])
    if not values:
        raise ValueError("no measurable classes")
    return float(np.mean(values))
