from __future__ import annotations

import csv
import logging

from typing import List, Tuple, Iterable, Optional, Sequence as SequenceT
from dataclasses import astuple, dataclass

import numpy as np

from ..config import TrackerConfig
from ..model import SGDViT, HeadOutputs, TemplateFeatures, normalize_crop
from ..autodiff import Tensor, flop_counter
from .geometry import BBox, Crop, GridGeometry, crop_frame, crop_sides, hanning_window

log = logging.getLogger(__name__)


class TrackerError(Exception):
    pass


@dataclass
class TrackerState:
    template: TemplateFeatures
    box: BBox
    frame_index: int
    context: float
    window: np.ndarray
    frame_size: Tuple[int, int]


TOKEN_LOG_COLUMNS = ("frame", "k_fine", "n_tokens", "encoder_macs", "decoder_macs")


@dataclass
class FrameTokens:
    frame: int
    k_fine: int
    n_tokens: int
    encoder_macs: int
    decoder_macs: int


def write_token_log(path: str, rows: SequenceT[FrameTokens]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TOKEN_LOG_COLUMNS)

        for row in rows:
            writer.writerow(astuple(row))


# scores this close to the maximum count as tied
TIE_TOLERANCE = 1e-9


@dataclass
class Selection:
    row: int
    col: int
    scores: np.ndarray
    confidence: float
    # every cell tied for the maximum, row-major; the first one is (row, col)
    ties: List[Tuple[int, int]]


def select_cell(cls_logits: np.ndarray, window: np.ndarray, penalty: float) -> Selection:
    """
    argmax of (1 - penalty) * sigmoid(cls) + penalty * window, first maximum row-major.
    An even grid has no centre cell, so a dominant window ties the central cells;
    all of them are reported and the confidence is their mean.
    """

    probs = 1.0 / (1.0 + np.exp(-cls_logits.astype(np.float64)))
    scores = (1.0 - penalty) * probs + penalty * window

    rows, cols = np.nonzero(scores >= scores.max() - TIE_TOLERANCE)
    ties = [(int(r), int(c)) for r, c in zip(rows, cols)]
    row, col = ties[0]

    return Selection(
        row=row,
        col=col,
        scores=scores,
        confidence=float(probs[rows, cols].mean()),
        ties=ties,
    )


def decode_box(
    reg: np.ndarray, row: int, col: int, grid: GridGeometry, crop: Crop
) -> BBox:
    """(l, t, r, b) grid distances at a cell to a frame-space box."""

    left, top, right, bottom = (float(v) for v in reg[:, row, col])

    gx = col + (right - left) / 2
    gy = row + (bottom - top) / 2

    cx, cy = crop.to_frame(grid.to_crop(gx), grid.to_crop(gy))
    w = (left + right) * grid.step * crop.scale
    h = (top + bottom) * grid.step * crop.scale

    return BBox(cx, cy, w, h)


class Tracker:
    """
    Per-frame loop: crop around the last box, forward, penalize, decode, damp size.
    With `log_tokens` every tracked frame of a token-based variant appends its token
    plan and transformer MACs to `token_log`.
    """

    def __init__(
        self, model: SGDViT, config: Optional[TrackerConfig] = None, log_tokens: bool = False
    ) -> None:
        self.model = model
        self.config = config or TrackerConfig()
        self.log_tokens = log_tokens
        self.token_log: List[FrameTokens] = []

        model_cfg = model.config
        self.geometry = GridGeometry(
            grid=model_cfg.grid,
            search_size=model_cfg.search_size,
            feature_size=model.search_grid,
        )

    def _sides(self, box: BBox) -> Tuple[float, float]:
        cfg = self.model.config

        return crop_sides(box, self.config.context, cfg.template_size, cfg.search_size)

    def init_template(self, frame: np.ndarray, gt_box: BBox) -> TrackerState:
        if not gt_box.is_valid:
            raise TrackerError(f"degenerate initial box {gt_box}")

        h, w = frame.shape[:2]
        if not (0 <= gt_box.cx <= w and 0 <= gt_box.cy <= h):
            raise TrackerError(f"initial box centre {gt_box.cx, gt_box.cy} outside {w}x{h} frame")

        template_side, _ = self._sides(gt_box)
        crop = crop_frame(frame, gt_box.cx, gt_box.cy, template_side, self.model.config.template_size)

        template = self.model.template_features(Tensor(normalize_crop(crop.pixels))).freeze()
        self.token_log = []

        return TrackerState(
            template=template,
            box=gt_box,
            frame_index=0,
            context=self.config.context,
            window=hanning_window(self.model.config.grid),
            frame_size=(w, h),
        )

    def search_crop(self, frame: np.ndarray, box: BBox) -> Crop:
        _, search_side = self._sides(box)

        return crop_frame(frame, box.cx, box.cy, search_side, self.model.config.search_size)

    def track_frame(
        self, frame: np.ndarray, state: Optional[TrackerState]
    ) -> Tuple[BBox, float]:
        if state is None:
            raise TrackerError("tracker state is not initialized, call init_template first")

        crop = self.search_crop(frame, state.box)
        search = Tensor(normalize_crop(crop.pixels))

        if self.log_tokens:
            with flop_counter() as report:
                outputs = self.model(state.template, search)

            if outputs.tokens is not None:
                self.token_log.append(
                    FrameTokens(
                        frame=state.frame_index + 1,
                        k_fine=outputs.tokens.k_fine,
                        n_tokens=outputs.tokens.n_tokens,
                        encoder_macs=report.child("encoder").total,
                        decoder_macs=report.child("decoder").total,
                    )
                )
        else:
            outputs = self.model(state.template, search)

        box, confidence = self.decode(outputs.heads, crop, state)

        state.box = box
        state.frame_index += 1

        return box, confidence

    def decode(self, heads: HeadOutputs, crop: Crop, state: TrackerState) -> Tuple[BBox, float]:
        cls = heads.cls.data[0]
        selection = select_cell(cls, state.window, self.config.penalty)

        # tied cells decode to the mean of their boxes, the grid midpoint for a flat window
        boxes = [
            decode_box(heads.reg.data, row, col, self.geometry, crop) for row, col in selection.ties
        ]
        predicted = BBox(*(float(v) for v in np.mean([astuple(b) for b in boxes], axis=0)))

        momentum = self.config.scale_momentum
        box = BBox(
            predicted.cx,
            predicted.cy,
            momentum * state.box.w + (1 - momentum) * predicted.w,
            momentum * state.box.h + (1 - momentum) * predicted.h,
        )

        frame_w, frame_h = state.frame_size

        return box.clamp(frame_w, frame_h, self.config.min_size), selection.confidence

    def run(self, frames: Iterable[np.ndarray], init_box: BBox) -> List[Tuple[BBox, float]]:
        """OPE: initialize on the first frame, which is reported as the given box."""

        results: List[Tuple[BBox, float]] = []
        state: Optional[TrackerState] = None

        for index, frame in enumerate(frames):
            if state is None:
                state = self.init_template(frame, init_box)
                results.append((init_box, 1.0))

                continue

            box, confidence = self.track_frame(frame, state)
            results.append((box, confidence))

            log.debug(f"frame {index}: {box} confidence {confidence:.3f}")

        return results
