from __future__ import annotations

import logging

from typing import Dict, List, Tuple, Iterable, Optional, Sequence
from dataclasses import dataclass

import numpy as np

from ..model import SGDViT
from ..config import Variant, TrainConfig, ModelConfig, TrackerConfig
from ..evaluation.metrics import MetricReport, report
from .train import TrainResult, train_toy
from .tracker import Tracker
from .geometry import BBox

log = logging.getLogger(__name__)

ATTENTION_MARKER = ".mha."


@dataclass
class ParameterAudit:
    # parameter name -> shape
    shapes: Dict[str, Tuple[int, ...]]

    @property
    def attention(self) -> List[str]:
        return [name for name in self.shapes if ATTENTION_MARKER in name]

    @property
    def encoder_ffn(self) -> List[str]:
        return [
            name for name in self.shapes if name.startswith("sft.encoder.") and ".ffn" in name
        ]

    @property
    def total(self) -> int:
        return int(sum(np.prod(shape) for shape in self.shapes.values()))


@dataclass
class AblationRecord:
    variant: Variant
    audit: ParameterAudit
    training: TrainResult
    metrics: MetricReport


def audit_parameters(model: SGDViT) -> ParameterAudit:
    return ParameterAudit({name: tuple(p.shape) for name, p in model.named_parameters()})


def run_ablation(
    variant: object,
    frames: Sequence[np.ndarray],
    boxes: Sequence[BBox],
    model_config: Optional[ModelConfig] = None,
    train_config: Optional[TrainConfig] = None,
    tracker_config: Optional[TrackerConfig] = None,
) -> AblationRecord:
    """Trains one variant from the shared seed on the sequence, then tracks it."""

    kind = Variant.parse(variant)

    model_config = (model_config or ModelConfig()).replace(variant=kind.value)
    train_config = train_config or TrainConfig()

    model = SGDViT(model_config, seed=train_config.seed)
    audit = audit_parameters(model)

    training = train_toy(model, frames, boxes, train_config, tracker_config)

    tracker = Tracker(model.freeze(), tracker_config)
    predictions = [box for box, _ in tracker.run(frames, boxes[0])]

    metrics = report(predictions, list(boxes))

    log.info(
        f"{kind.value}: {audit.total} parameters, loss {training.initial_loss:.4f} -> "
        f"{training.final_loss:.4f}, mean iou {metrics.mean_iou:.3f}, "
        f"precision20 {metrics.precision20:.3f}"
    )

    return AblationRecord(variant=kind, audit=audit, training=training, metrics=metrics)


def run_ablations(
    variants: Iterable[object],
    frames: Sequence[np.ndarray],
    boxes: Sequence[BBox],
    model_config: Optional[ModelConfig] = None,
    train_config: Optional[TrainConfig] = None,
    tracker_config: Optional[TrackerConfig] = None,
) -> Dict[Variant, AblationRecord]:
    # parse first so a typo fails before any training starts
    kinds = [Variant.parse(v) for v in variants]

    return {
        kind: run_ablation(kind, frames, boxes, model_config, train_config, tracker_config)
        for kind in kinds
    }
