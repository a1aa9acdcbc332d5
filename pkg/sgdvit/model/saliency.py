from __future__ import annotations

import logging

from dataclasses import dataclass

import numpy as np

from ..nn import MLP, Conv2d, Module, ConvTranspose2d
from ..autodiff import Tensor, ShapeError, ops, conv

log = logging.getLogger(__name__)


@dataclass
class SaliencyArtifacts:
    """Mining products, all laid out (channels, H, W) on the correlation grid."""

    s1: Tensor
    s2: Tensor
    fl: Tensor
    m: Tensor


def cross_correlate(search_feat: Tensor, template_feat: Tensor) -> Tensor:
    """Depthwise stride-1 correlation without padding: (C, 26, 26) x (C, 6, 6) -> (C, 21, 21)."""

    return conv.xcorr_depthwise(search_feat, template_feat)


class SaliencyMining(Module):
    """
    S2 = Deconv(Conv(MLP(S1))) where the MLP mixes the flattened spatial axis shared
    across channels and the conv halves the channels. Fl and M are single 3x3 convs
    over S2.
    """

    def __init__(self, channels: int, size: int, rng: np.random.Generator) -> None:
        self.channels = channels
        self.size = size

        positions = size * size
        self.mlp = MLP(positions, 2 * positions, rng)

        self.fuse = Conv2d(channels, channels // 2, 3, rng, padding=1)
        self.restore = ConvTranspose2d(channels // 2, channels, 3, rng, padding=1)

        if self.restore.output_size(self.fuse.output_size(size)) != size:
            raise ShapeError("saliency_mining", [(channels, size, size)], "conv-deconv changes size")

        self.features = Conv2d(channels, channels, 3, rng, padding=1)
        self.saliency = Conv2d(channels, 1, 3, rng, padding=1)

    def forward(self, s1: Tensor) -> SaliencyArtifacts:
        if s1.shape != (self.channels, self.size, self.size):
            raise ShapeError(
                "mine_saliency", [s1.shape, (self.channels, self.size, self.size)]
            )

        c, h, w = s1.shape

        mixed = self.mlp(s1.reshape(c, h * w)).reshape(c, h, w)
        s2 = self.restore(ops.relu(self.fuse(mixed)))

        return SaliencyArtifacts(s1=s1, s2=s2, fl=self.features(s2), m=self.saliency(s2))


def mine_saliency(s1: Tensor, mining: SaliencyMining) -> SaliencyArtifacts:
    return mining(s1)
