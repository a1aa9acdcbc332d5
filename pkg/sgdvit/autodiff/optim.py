from __future__ import annotations

import math
import logging

from typing import List, Sequence
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, GradientError

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    velocity: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def _param_name(param: Tensor, index: int) -> str:
    return param.name or f"#{index}"


def sgd_step(params: Sequence[Tensor], state: OptimizerState) -> None:
    """v <- momentum * v + grad; param <- param - lr * v; grads are cleared."""

    for i, param in enumerate(params):
        if param.grad is None:
            raise GradientError(f"parameter {_param_name(param, i)} has no gradient")

    if not state.velocity:
        state.velocity = [np.zeros_like(p.data) for p in params]

    for i, (param, velocity) in enumerate(zip(params, state.velocity)):
        if velocity.shape != param.data.shape:
            raise GradientError(
                f"velocity of {_param_name(param, i)} has shape {velocity.shape}, "
                f"expected {param.data.shape}"
            )

        velocity *= state.momentum
        velocity += param.grad  # type: ignore[arg-type]

        param.data -= (state.learning_rate * velocity).astype(param.data.dtype)
        param.grad = None


def grad_norm(params: Sequence[Tensor]) -> float:
    return math.sqrt(sum(float((p.grad ** 2).sum()) for p in params if p.grad is not None))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescales gradients in place so their global L2 norm is at most max_norm."""

    norm = grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale

    return norm


def learning_rate_at(
    iteration: int, iterations: int, lr: float, lr_end: float, schedule: str
) -> float:
    """
    `constant` keeps lr, `log` decays from lr to lr_end evenly in log space over the
    run.
    """

    if schedule == "constant" or iterations <= 1:
        return lr

    if schedule != "log":
        raise ValueError(f"Unknown learning rate schedule: {schedule}")

    if lr <= 0 or lr_end <= 0:
        return lr

    t = iteration / (iterations - 1)

    return float(math.exp(math.log(lr) + t * (math.log(lr_end) - math.log(lr))))
