from __future__ import annotations

from typing import Tuple, Union, Optional, Sequence

import numpy as np

from ..autodiff import Tensor, ShapeError, ops, conv
from ..autodiff.conv import conv_output_size, deconv_output_size
from .module import Module, Parameter, kaiming_uniform

Size2 = Union[int, Tuple[int, int]]


def _pair(value: Size2) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value

    return value


class Linear(Module):
    """y = x @ weight + bias, weight laid out (in, out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        self.in_features = in_features
        self.out_features = out_features

        self.weight = Parameter(kaiming_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor, flop_kind: str = "linear") -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError("linear", [x.shape, self.weight.shape])

        return ops.matmul(x, self.weight, flop_kind=flop_kind) + self.bias


class MLP(Module):
    """Linear -> ReLU -> Linear over the last axis, shape preserving."""

    def __init__(self, dim: int, hidden_dim: int, rng: np.random.Generator) -> None:
        self.fc1 = Linear(dim, hidden_dim, rng)
        self.fc2 = Linear(hidden_dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Size2,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        dilation: int = 1,
        input_sizes: Sequence[int] = (),
    ) -> None:
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = _pair(kernel)
        self.stride = stride
        self.padding = padding
        self.dilation = dilation

        kh, kw = self.kernel
        fan_in = in_channels * kh * kw
        self.weight = Parameter(kaiming_uniform(rng, (out_channels, in_channels, kh, kw), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

        for size in input_sizes:
            if self.output_size(size) < 1:
                raise ShapeError(
                    "conv2d", [(in_channels, size, size), self.weight.shape], "no output"
                )

    def output_size(self, size: int) -> int:
        return conv_output_size(size, self.kernel[0], self.stride, self.padding, self.dilation)

    def forward(self, x: Tensor) -> Tensor:
        return conv.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class ConvTranspose2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Size2,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ) -> None:
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = _pair(kernel)
        self.stride = stride
        self.padding = padding

        kh, kw = self.kernel
        fan_in = in_channels * kh * kw
        self.weight = Parameter(kaiming_uniform(rng, (in_channels, out_channels, kh, kw), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def output_size(self, size: int) -> int:
        return deconv_output_size(size, self.kernel[0], self.stride, self.padding)

    def forward(self, x: Tensor) -> Tensor:
        return conv.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    """Per-token normalization over the last axis."""

    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        self.dim = dim
        self.eps = eps

        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeError("layer_norm", [x.shape, (self.dim,)])

        centered = x - x.mean(axis=-1, keepdims=True)
        variance = (centered * centered).mean(axis=-1, keepdims=True)

        return centered * (variance + self.eps) ** -0.5 * self.gamma + self.beta


class FeedForward(Module):
    def __init__(self, dim: int, hidden_dim: int, rng: np.random.Generator) -> None:
        self.fc1 = Linear(dim, hidden_dim, rng)
        self.fc2 = Linear(hidden_dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x, flop_kind="ffn")), flop_kind="ffn")


def mlp_forward(x: Tensor, mlp: MLP, hidden_dim: Optional[int] = None) -> Tensor:
    if hidden_dim is not None and mlp.fc1.out_features != hidden_dim:
        raise ShapeError("mlp", [x.shape, mlp.fc1.weight.shape], f"hidden dim != {hidden_dim}")

    return mlp(x)


def conv_forward(x: Tensor, layer: Conv2d) -> Tensor:
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeError("conv2d", [x.shape, layer.weight.shape], "channel mismatch")

    return layer(x)
