from __future__ import annotations

import logging

from typing import Optional
from dataclasses import dataclass

import numpy as np

from ..model import HeadOutputs
from ..autodiff import Tensor, ops
from .geometry import BBox, Crop, GridGeometry

log = logging.getLogger(__name__)

CENTER_RADIUS = 0.3
REG_WEIGHT = 2.0


@dataclass
class LossTerms:
    total: Tensor
    cls: Tensor
    reg: Optional[Tensor]
    positives: int

    @property
    def flagged(self) -> bool:
        """True when no cell was positive and only the classification term counted."""

        return self.positives == 0


def box_to_grid(box: BBox, crop: Crop, geometry: GridGeometry) -> BBox:
    px, py = crop.from_frame(box.cx, box.cy)
    cell = geometry.step * crop.scale

    return BBox(geometry.to_grid(px), geometry.to_grid(py), box.w / cell, box.h / cell)


def positive_cells(target: BBox, grid: int) -> np.ndarray:
    """Cells within the central CENTER_RADIUS share of the box, at least the nearest one."""

    coords = np.arange(grid)
    dx = np.abs(coords[None, :] - target.cx)
    dy = np.abs(coords[:, None] - target.cy)

    rx = max(CENTER_RADIUS * target.w / 2, 0.5)
    ry = max(CENTER_RADIUS * target.h / 2, 0.5)

    return (dx <= rx) & (dy <= ry)


def toy_loss(heads: HeadOutputs, target: BBox) -> LossTerms:
    """
    Balanced binary cross-entropy on cls plus 1 - IoU on reg at positive cells,
    total = cls + 2 * reg. `target` is in grid units.
    """

    logits = heads.cls
    grid = logits.shape[-1]

    positive = positive_cells(target, grid)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos

    labels = positive.astype(logits.dtype)[None]

    if n_pos == 0 or n_neg == 0:
        weights = np.full(positive.shape, 1.0 / positive.size)
    else:
        weights = np.where(positive, 0.5 / n_pos, 0.5 / n_neg)

    # softplus(x) - y * x is the cross-entropy of sigmoid(x) against y
    bce = ops.softplus(logits) - logits * labels
    cls = (bce * weights.astype(logits.dtype)[None]).sum()

    if n_pos == 0:
        log.debug(f"no positive cells for target {target}, classification term only")

        return LossTerms(total=cls, cls=cls, reg=None, positives=0)

    reg = iou_loss(heads.reg, target, positive)

    return LossTerms(total=cls + reg * REG_WEIGHT, cls=cls, reg=reg, positives=n_pos)


def iou_loss(reg: Tensor, target: BBox, positive: np.ndarray) -> Tensor:
    grid = reg.shape[-1]
    rows, cols = np.nonzero(positive)
    cells = rows * grid + cols

    pred = ops.index_select(reg.reshape(4, grid * grid), cells, axis=1)

    # a positive cell may lie outside a box smaller than one cell, no negative sides
    x1, y1, x2, y2 = target.corners()
    goal = np.maximum(np.stack([cols - x1, rows - y1, x2 - cols, y2 - rows]), 0.0).astype(reg.dtype)

    left, top, right, bottom = (pred[i] for i in range(4))
    g_left, g_top, g_right, g_bottom = goal

    inter_w = ops.minimum(left, g_left) + ops.minimum(right, g_right)
    inter_h = ops.minimum(top, g_top) + ops.minimum(bottom, g_bottom)
    inter = inter_w * inter_h

    pred_area = (left + right) * (top + bottom)
    goal_area = Tensor((g_left + g_right) * (g_top + g_bottom))

    iou = inter / (pred_area + goal_area - inter + 1e-9)

    return (1.0 - iou).mean()
