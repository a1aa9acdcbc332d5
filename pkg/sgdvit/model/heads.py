from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Conv2d, Module
from ..autodiff import Tensor, ShapeError, ops


@dataclass
class HeadOutputs:
    # (1, G, G) objectness logits
    cls: Tensor
    # (4, G, G) non-negative (l, t, r, b) distances in grid units
    reg: Tensor


class TrackingHeads(Module):
    """Anchor-free centre + distance heads, two 3x3 convs each."""

    def __init__(self, channels: int, rng: np.random.Generator, cls_bias: float = 0.0) -> None:
        self.channels = channels

        self.cls_hidden = Conv2d(channels, channels, 3, rng, padding=1)
        self.cls_out = Conv2d(channels, 1, 3, rng, padding=1)
        self.cls_out.bias.data[:] = cls_bias

        self.reg_hidden = Conv2d(channels, channels, 3, rng, padding=1)
        self.reg_out = Conv2d(channels, 4, 3, rng, padding=1)

    def forward(self, feat: Tensor) -> HeadOutputs:
        if feat.ndim != 3 or feat.shape[0] != self.channels:
            raise ShapeError("heads", [feat.shape, (self.channels,)], "channel mismatch")

        cls = self.cls_out(ops.relu(self.cls_hidden(feat)))
        reg = ops.softplus(self.reg_out(ops.relu(self.reg_hidden(feat))))

        return HeadOutputs(cls=cls, reg=reg)
