"""Spatial ops on single images laid out channel-first (C, H, W)."""

from __future__ import annotations

from typing import Tuple, Optional, Sequence

import numpy as np

from .tensor import Tensor, Function, ShapeError, tensor_op


def conv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def deconv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1) -> int:
    return (size - 1) * stride - 2 * padding + dilation * (kernel - 1) + 1


def _im2col(
    x: np.ndarray, kh: int, kw: int, stride: int, padding: int, dilation: int
) -> Tuple[np.ndarray, int, int]:
    c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, padding, dilation)
    wo = conv_output_size(w, kw, stride, padding, dilation)

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x

    cols = np.empty((c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        y0 = i * dilation
        for j in range(kw):
            x0 = j * dilation
            cols[:, i, j] = xp[
                :, y0 : y0 + stride * (ho - 1) + 1 : stride, x0 : x0 + stride * (wo - 1) + 1 : stride
            ]

    return cols.reshape(c * kh * kw, ho * wo), ho, wo


def _col2im(
    cols: np.ndarray,
    shape: Tuple[int, int, int],
    kh: int,
    kw: int,
    stride: int,
    padding: int,
    dilation: int,
    ho: int,
    wo: int,
) -> np.ndarray:
    c, h, w = shape

    xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        y0 = i * dilation
        for j in range(kw):
            x0 = j * dilation
            xp[
                :, y0 : y0 + stride * (ho - 1) + 1 : stride, x0 : x0 + stride * (wo - 1) + 1 : stride
            ] += cols[:, i, j]

    return xp[:, padding : padding + h, padding : padding + w]


class Conv2d(Function):
    kind = "conv2d"

    def forward(self, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        stride = self.params.get("stride", 1)
        padding = self.params.get("padding", 0)
        dilation = self.params.get("dilation", 1)

        if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[1]:
            raise ShapeError(self.kind, [x.shape, w.shape], "expected (C,H,W) and (O,C,kh,kw)")

        _, kh, kw = w.shape[1:]
        for size, k in zip(x.shape[1:], (kh, kw)):
            if size + 2 * padding < dilation * (k - 1) + 1:
                raise ShapeError(
                    self.kind, [x.shape, w.shape], "input smaller than effective kernel"
                )

        cols, ho, wo = _im2col(x, kh, kw, stride, padding, dilation)

        self.x_shape = x.shape
        self.cols = cols
        self.w = w
        self.geometry = (kh, kw, stride, padding, dilation, ho, wo)

        out = w.reshape(w.shape[0], -1) @ cols + b[:, None]

        return out.reshape(w.shape[0], ho, wo)

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        kh, kw, stride, padding, dilation, ho, wo = self.geometry
        out_channels = self.w.shape[0]

        g = grad.reshape(out_channels, -1)
        grad_w = (g @ self.cols.T).reshape(self.w.shape)
        grad_b = g.sum(axis=1)

        grad_cols = self.w.reshape(out_channels, -1).T @ g
        grad_x = _col2im(grad_cols, self.x_shape, kh, kw, stride, padding, dilation, ho, wo)

        return grad_x, grad_w, grad_b

    def macs(self, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> int:  # type: ignore[override]
        _, _, _, _, _, ho, wo = self.geometry

        return int(w.size) * ho * wo


class ConvTranspose2d(Function):
    """Transposed convolution, weight laid out (C_in, C_out, kh, kw)."""

    kind = "conv_transpose2d"

    def forward(self, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:  # type: ignore[override]
        stride = self.params.get("stride", 1)
        padding = self.params.get("padding", 0)
        dilation = self.params.get("dilation", 1)

        if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[0]:
            raise ShapeError(self.kind, [x.shape, w.shape], "expected (C,H,W) and (C,O,kh,kw)")

        c_in, h, wd = x.shape
        c_out, kh, kw = w.shape[1:]
        ho = deconv_output_size(h, kh, stride, padding, dilation)
        wo = deconv_output_size(wd, kw, stride, padding, dilation)
        if ho < 1 or wo < 1:
            raise ShapeError(self.kind, [x.shape, w.shape], "padding removes the whole output")

        cols = w.reshape(c_in, -1).T @ x.reshape(c_in, -1)
        out = _col2im(cols, (c_out, ho, wo), kh, kw, stride, padding, dilation, h, wd)

        self.x = x
        self.w = w
        self.geometry = (kh, kw, stride, padding, dilation)

        return out + b[:, None, None]

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        kh, kw, stride, padding, dilation = self.geometry
        c_in = self.x.shape[0]

        grad_cols, _, _ = _im2col(grad, kh, kw, stride, padding, dilation)

        grad_x = (self.w.reshape(c_in, -1) @ grad_cols).reshape(self.x.shape)
        grad_w = (self.x.reshape(c_in, -1) @ grad_cols.T).reshape(self.w.shape)
        grad_b = grad.sum(axis=(1, 2))

        return grad_x, grad_w, grad_b

    def macs(self, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> int:  # type: ignore[override]
        return int(w.size) * x.shape[1] * x.shape[2]


class MaxPool2d(Function):
    kind = "max_pool2d"

    def forward(self, x: np.ndarray) -> np.ndarray:  # type: ignore[override]
        k = self.params["kernel"]
        s = self.params.get("stride", k)

        c, h, w = x.shape
        if h < k or w < k:
            raise ShapeError(self.kind, [x.shape], f"input smaller than pooling kernel {k}")

        ho = (h - k) // s + 1
        wo = (w - k) // s + 1

        out = np.full((c, ho, wo), -np.inf, dtype=x.dtype)
        arg = np.zeros((c, ho, wo), dtype=np.int64)
        for i in range(k):
            for j in range(k):
                window = x[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s]
                better = window > out
                out = np.where(better, window, out)
                arg = np.where(better, i * k + j, arg)

        self.shape = x.shape
        self.arg = arg
        self.geometry = (k, s, ho, wo)

        return out

    def branches(self) -> Optional[np.ndarray]:
        return self.arg

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        k, s, ho, wo = self.geometry

        grad_x = np.zeros(self.shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                hit = self.arg == i * k + j
                grad_x[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += grad * hit

        return (grad_x,)


class DepthwiseXCorr(Function):
    """Per-channel sliding inner product of a template over a search map, stride 1."""

    kind = "xcorr"

    def forward(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:  # type: ignore[override]
        if x.ndim != 3 or z.ndim != 3 or x.shape[0] != z.shape[0]:
            raise ShapeError(self.kind, [x.shape, z.shape], "channel counts differ")

        if z.shape[1] > x.shape[1] or z.shape[2] > x.shape[2]:
            raise ShapeError(self.kind, [x.shape, z.shape], "template larger than search")

        _, kh, kw = z.shape
        ho = x.shape[1] - kh + 1
        wo = x.shape[2] - kw + 1

        out = np.zeros((x.shape[0], ho, wo), dtype=np.result_type(x, z))
        for u in range(kh):
            for v in range(kw):
                out += x[:, u : u + ho, v : v + wo] * z[:, u, v, None, None]

        self.x, self.z = x, z

        return out

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        _, kh, kw = self.z.shape
        _, ho, wo = grad.shape

        grad_x = np.zeros_like(self.x, dtype=grad.dtype)
        grad_z = np.empty_like(self.z, dtype=grad.dtype)
        for u in range(kh):
            for v in range(kw):
                grad_x[:, u : u + ho, v : v + wo] += grad * self.z[:, u, v, None, None]
                grad_z[:, u, v] = (grad * self.x[:, u : u + ho, v : v + wo]).sum(axis=(1, 2))

        return grad_x, grad_z

    def macs(self, x: np.ndarray, z: np.ndarray) -> int:  # type: ignore[override]
        c, kh, kw = z.shape

        return c * (x.shape[1] - kh + 1) * (x.shape[2] - kw + 1) * kh * kw


def conv2d(
    x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0, dilation: int = 1
) -> Tensor:
    return tensor_op("conv2d", x, w, b, stride=stride, padding=padding, dilation=dilation)


def conv_transpose2d(
    x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0, dilation: int = 1
) -> Tensor:
    return tensor_op(
        "conv_transpose2d", x, w, b, stride=stride, padding=padding, dilation=dilation
    )


def max_pool2d(x: Tensor, kernel: int, stride: Optional[int] = None) -> Tensor:
    return tensor_op("max_pool2d", x, kernel=kernel, stride=stride or kernel)


def xcorr_depthwise(search: Tensor, template: Tensor) -> Tensor:
    return tensor_op("xcorr", search, template)
