from __future__ import annotations

import logging

from typing import List, Tuple, Optional, Sequence

import numpy as np

from ..nn import Conv2d, Module, resize_bilinear
from ..autodiff import Tensor, ShapeError, ops, conv, default_dtype

log = logging.getLogger(__name__)

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])

FEATURE_STRIDE = 8


def normalize_crop(crop: np.ndarray) -> np.ndarray:
    """(S, S, 3) pixels in [0, 255] to a standardized (3, S, S) array."""

    if crop.ndim != 3 or crop.shape[2] != 3:
        raise ShapeError("normalize_crop", [crop.shape], "expected (S, S, 3) pixels")

    scaled = crop.astype(np.float64) / 255.0
    standardized = (scaled - IMAGENET_MEAN) / IMAGENET_STD

    return standardized.transpose(2, 0, 1).astype(default_dtype())


class Backbone(Module):
    """
    AlexNet-like stack: conv11/2, pool3/2, conv5, pool3/2, conv3, conv3, conv3. ReLU
    follows every conv but the last. 127 -> 6 and 287 -> 26 with the default sizes.
    """

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        stage_channels: Sequence[int] = (48, 96, 192, 192),
        template_size: int = 127,
        search_size: int = 287,
    ) -> None:
        c1, c2, c3, c4 = stage_channels

        self.supported_sizes = (template_size, search_size)
        self.out_channels = channels

        self.conv1 = Conv2d(3, c1, 11, rng, stride=2)
        self.conv2 = Conv2d(c1, c2, 5, rng)
        self.conv3 = Conv2d(c2, c3, 3, rng)
        self.conv4 = Conv2d(c3, c4, 3, rng)
        self.conv5 = Conv2d(c4, channels, 3, rng)

        self.output_sizes = {size: self.output_size(size) for size in self.supported_sizes}
        for size, out in self.output_sizes.items():
            if out < 1:
                raise ShapeError("backbone", [(3, size, size)], "crop too small for the stack")

    def output_size(self, size: int) -> int:
        size = self.conv1.output_size(size)
        size = (size - 3) // 2 + 1
        size = self.conv2.output_size(size)
        size = (size - 3) // 2 + 1
        for layer in (self.conv3, self.conv4, self.conv5):
            size = layer.output_size(size)

        return size

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[0] != 3 or x.shape[1] != x.shape[2]:
            raise ShapeError("backbone", [x.shape], "expected a square (3, S, S) crop")

        if x.shape[1] not in self.supported_sizes:
            raise ShapeError(
                "backbone",
                [x.shape],
                f"unsupported crop size {x.shape[1]}, supported: {list(self.supported_sizes)}",
            )

        x = ops.relu(self.conv1(x))
        x = conv.max_pool2d(x, 3, 2)
        x = ops.relu(self.conv2(x))
        x = conv.max_pool2d(x, 3, 2)
        x = ops.relu(self.conv3(x))
        x = ops.relu(self.conv4(x))

        return self.conv5(x)


def branch_channels(channels: int, branches: int = 3) -> List[int]:
    share = channels // branches

    return [share] * (branches - 1) + [channels - share * (branches - 1)]


class AdjustSampler(Module):
    """
    Parallel branches of 1, 2 and 3 stacked 3x3 convs (receptive fields 3, 5 and 7),
    concatenated back to C channels, then an optional bilinear resize. Shared by the
    template and search paths.
    """

    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        self.channels = channels
        self.branches: List[List[Conv2d]] = []

        for depth, width in enumerate(branch_channels(channels), start=1):
            layers = [Conv2d(channels, width, 3, rng, padding=1)]
            layers += [Conv2d(width, width, 3, rng, padding=1) for _ in range(depth - 1)]
            self.branches.append(layers)

    def forward(self, feat: Tensor, size: Optional[int] = None) -> Tensor:
        if feat.ndim != 3 or feat.shape[0] != self.channels:
            raise ShapeError("adjust_sample", [feat.shape, (self.channels,)], "channel mismatch")

        outputs = []
        for layers in self.branches:
            x = feat
            for i, layer in enumerate(layers):
                if i:
                    x = ops.relu(x)
                x = layer(x)
            outputs.append(x)

        out = ops.concat(outputs, axis=0)
        if size is not None:
            out = resize_bilinear(out, size)

        return out


def extract_features(image_crop: Tensor, backbone: Backbone) -> Tensor:
    return backbone(image_crop)


def adjust_sample(feat: Tensor, sampler: AdjustSampler, size: Optional[int] = None) -> Tensor:
    return sampler(feat, size)


def check_window_alignment(grid: int, window: int) -> Tuple[int, int]:
    if window <= 0 or grid % window:
        raise ShapeError("adjust_sample", [(grid,), (window,)], "grid not divisible by window")

    return grid, window
