"""
One-pass evaluation metrics.

Conventions: a frame passes a CLE threshold t when cle < t and an IoU threshold t when
iou > t. Success thresholds are the centres (k + 0.5) / 100 of 100 equal bins over
[0, 1], so identical boxes score 1, disjoint boxes 0, and the success AUC stays within
0.005 of the mean IoU. Normalized CLE divides the centre offset by the ground-truth
width and height before taking the norm.
"""

from __future__ import annotations

import math

from typing import Dict, Sequence
from dataclasses import dataclass

import numpy as np

from ..data.sequence import DataError
from ..tracking.geometry import BBox

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
NORM_PRECISION_THRESHOLDS = np.linspace(0.0, 0.5, 101)
SUCCESS_THRESHOLDS = (np.arange(100) + 0.5) / 100

PRECISION_AT = 20.0

CONVENTIONS = (
    "precision: cle < t px, t = 0..50; precision20 uses t = 20",
    "norm_precision: mean over t = 0..0.5 step 0.005 of share with "
    "sqrt(((px-gx)/gw)^2 + ((py-gy)/gh)^2) < t",
    "success: iou > t, t = (k+0.5)/100 for k = 0..99; success_auc = mean over t",
)


class MetricError(DataError):
    pass


def compute_cle(pred: BBox, gt: BBox) -> float:
    return math.hypot(pred.cx - gt.cx, pred.cy - gt.cy)


def compute_iou(pred: BBox, gt: BBox) -> float:
    ax1, ay1, ax2, ay2 = pred.corners()
    bx1, by1, bx2, by2 = gt.corners()

    inter_w = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    inter_h = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = inter_w * inter_h

    union = pred.area + gt.area - inter
    if union <= 0:
        return 0.0

    return inter / union


def normalized_cle(pred: BBox, gt: BBox) -> float:
    return math.hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h)


def precision_curve(cle: np.ndarray, thresholds: np.ndarray = PRECISION_THRESHOLDS) -> np.ndarray:
    return (np.asarray(cle)[None, :] < thresholds[:, None]).mean(axis=1)


def success_curve(ious: np.ndarray, thresholds: np.ndarray = SUCCESS_THRESHOLDS) -> np.ndarray:
    return (np.asarray(ious)[None, :] > thresholds[:, None]).mean(axis=1)


@dataclass
class MetricReport:
    cle: np.ndarray
    iou: np.ndarray
    norm_cle: np.ndarray
    precision_curve: np.ndarray
    norm_precision_curve: np.ndarray
    success_curve: np.ndarray

    @property
    def frames(self) -> int:
        return int(self.cle.size)

    @property
    def precision20(self) -> float:
        return float((self.cle < PRECISION_AT).mean())

    @property
    def norm_precision(self) -> float:
        return float(self.norm_precision_curve.mean())

    @property
    def success_auc(self) -> float:
        return float(self.success_curve.mean())

    @property
    def mean_iou(self) -> float:
        return float(self.iou.mean())

    def summary(self) -> Dict[str, float]:
        return {
            "frames": self.frames,
            "precision20": self.precision20,
            "norm_precision": self.norm_precision,
            "success_auc": self.success_auc,
            "mean_iou": self.mean_iou,
        }


def report(preds: Sequence[BBox], gts: Sequence[BBox]) -> MetricReport:
    if not preds or not gts:
        raise MetricError("cannot evaluate an empty sequence")

    if len(preds) != len(gts):
        raise MetricError(f"{len(preds)} predictions for {len(gts)} ground-truth boxes")

    for i, gt in enumerate(gts):
        if not gt.is_valid:
            raise MetricError(f"ground-truth box {i} is degenerate: {gt}")

    cle = np.array([compute_cle(p, g) for p, g in zip(preds, gts)])
    iou = np.array([compute_iou(p, g) for p, g in zip(preds, gts)])
    norm_cle = np.array([normalized_cle(p, g) for p, g in zip(preds, gts)])

    return MetricReport(
        cle=cle,
        iou=iou,
        norm_cle=norm_cle,
        precision_curve=precision_curve(cle),
        norm_precision_curve=precision_curve(norm_cle, NORM_PRECISION_THRESHOLDS),
        success_curve=success_curve(iou),
    )
