from __future__ import annotations

import csv
import math
import logging

from typing import List, Tuple, Sequence, Optional
from dataclasses import dataclass

import numpy as np

from sentry_sdk import push_scope

from ..model import SGDViT, normalize_crop
from ..config import TrainConfig, TrackerConfig
from ..autodiff import (
    Tensor,
    GradTape,
    OptimizerState,
    split,
    sgd_step,
    clip_grad_norm,
    learning_rate_at,
)
from ..autodiff.ops import sum_all
from .loss import toy_loss, box_to_grid
from .geometry import BBox, GridGeometry, crop_frame, crop_sides

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "lr", "loss", "cls", "reg")


class NumericalError(Exception):
    def __init__(self, iteration: int, msg: str):
        self.iteration = iteration

        super().__init__(msg)

    def __str__(self) -> str:
        return f"iteration {self.iteration}: {self.args[0]}"


@dataclass
class LossRecord:
    iteration: int
    lr: float
    loss: float
    cls: float
    reg: float


@dataclass
class TrainResult:
    records: List[LossRecord]

    @property
    def initial_loss(self) -> float:
        return self.records[0].loss if self.records else math.nan

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else math.nan


class ToyTrainer:
    """
    Overfits a model on one sequence. The template is always frame 0; every pair draws
    a search frame and jitters the crop centre by up to `jitter` times the target size.
    """

    def __init__(
        self,
        model: SGDViT,
        config: Optional[TrainConfig] = None,
        tracker_config: Optional[TrackerConfig] = None,
    ) -> None:
        self.model = model
        self.config = config or TrainConfig()
        self.tracker_config = tracker_config or TrackerConfig()

        self.geometry = GridGeometry(
            grid=model.config.grid,
            search_size=model.config.search_size,
            feature_size=model.search_grid,
        )

        self.params = model.parameters()
        self.state = OptimizerState(
            learning_rate=self.config.lr, momentum=self.config.momentum
        )

    def _sides(self, box: BBox) -> Tuple[float, float]:
        cfg = self.model.config

        return crop_sides(box, self.tracker_config.context, cfg.template_size, cfg.search_size)

    def fit(self, frames: Sequence[np.ndarray], boxes: Sequence[BBox]) -> TrainResult:
        if len(frames) != len(boxes) or not frames:
            raise ValueError(f"need one box per frame, got {len(frames)} frames, {len(boxes)} boxes")

        cfg = self.config
        sampler, gumbel = split(cfg.seed, 2)

        template_side, _ = self._sides(boxes[0])
        template_crop = crop_frame(
            frames[0], boxes[0].cx, boxes[0].cy, template_side, self.model.config.template_size
        )
        template_input = Tensor(normalize_crop(template_crop.pixels))

        log.info(
            f"training {cfg.iterations} iterations on {len(frames)} frames, "
            f"variant {self.model.variant.value}, {self.model.num_parameters()} parameters"
        )

        records: List[LossRecord] = []
        for iteration in range(cfg.iterations):
            lr = learning_rate_at(iteration, cfg.iterations, cfg.lr, cfg.lr_end, cfg.schedule)
            self.state.learning_rate = lr

            with GradTape() as tape:
                template = self.model.template_features(template_input)

                totals = []
                cls_terms = []
                reg_terms = []
                for _ in range(cfg.frame_pairs):
                    search, target = self._sample(frames, boxes, sampler)

                    outputs = self.model(template, search, rng=gumbel)
                    terms = toy_loss(outputs.heads, target)

                    totals.append(terms.total)
                    cls_terms.append(terms.cls.item())
                    reg_terms.append(terms.reg.item() if terms.reg is not None else 0.0)

                loss = sum_all(totals) * (1.0 / len(totals))

                value = loss.item()
                if not math.isfinite(value):
                    with push_scope() as scope:
                        scope.set_extra("iteration", iteration)
                        scope.set_extra("loss_tail", [r.loss for r in records[-10:]])

                    raise NumericalError(iteration, f"loss became {value}")

                tape.backward(loss)

            self._fill_unused_grads()
            if cfg.grad_clip > 0:
                clip_grad_norm(self.params, cfg.grad_clip)

            sgd_step(self.params, self.state)

            record = LossRecord(
                iteration=iteration,
                lr=lr,
                loss=value,
                cls=float(np.mean(cls_terms)),
                reg=float(np.mean(reg_terms)),
            )
            records.append(record)

            log.debug(f"iteration {iteration}: loss {value:.5f}")
            if iteration % cfg.log_every == 0 or iteration == cfg.iterations - 1:
                log.info(
                    f"iteration {iteration}: loss {value:.4f} "
                    f"(cls {record.cls:.4f}, reg {record.reg:.4f}), lr {lr:.2e}"
                )

        return TrainResult(records)

    def _sample(
        self, frames: Sequence[np.ndarray], boxes: Sequence[BBox], rng: np.random.Generator
    ) -> Tuple[Tensor, BBox]:
        index = int(rng.integers(1, len(frames))) if len(frames) > 1 else 0
        box = boxes[index]

        jitter = self.config.jitter
        dx, dy = rng.uniform(-jitter, jitter, size=2)
        cx, cy = box.cx + dx * box.w, box.cy + dy * box.h

        _, search_side = self._sides(box)
        crop = crop_frame(frames[index], cx, cy, search_side, self.model.config.search_size)

        return Tensor(normalize_crop(crop.pixels)), box_to_grid(box, crop, self.geometry)

    def _fill_unused_grads(self) -> None:
        # windows that were never FINE leave the fine projection without a gradient
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def train_toy(
    model: SGDViT,
    frames: Sequence[np.ndarray],
    boxes: Sequence[BBox],
    config: Optional[TrainConfig] = None,
    tracker_config: Optional[TrackerConfig] = None,
) -> TrainResult:
    return ToyTrainer(model, config, tracker_config).fit(frames, boxes)


def write_loss_log(path: str, records: Sequence[LossRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOSS_COLUMNS)

        for r in records:
            writer.writerow([r.iteration, f"{r.lr:.8g}", f"{r.loss:.8g}", f"{r.cls:.8g}", f"{r.reg:.8g}"])
