from __future__ import annotations

from typing import Optional

import numpy as np

from ..autodiff import Tensor, ShapeError, ops

FILL_MODES = ("border", "zeros")


def interpolation_matrix(
    out_size: int,
    in_size: int,
    scale: Optional[float] = None,
    offset: float = 0.0,
    fill: str = "border",
) -> np.ndarray:
    """
    (out_size, in_size) linear interpolation weights for source positions
    `scale * i + offset`. The default scale aligns the corners of both grids. With
    fill="zeros" source positions outside the input contribute nothing, with "border"
    they are clamped to the edge.
    """

    if fill not in FILL_MODES:
        raise ValueError(f"Unknown fill mode: {fill}")

    if scale is None:
        scale = (in_size - 1) / (out_size - 1) if out_size > 1 else 0.0

    matrix = np.zeros((out_size, in_size))
    for i in range(out_size):
        src = scale * i + offset

        if fill == "border":
            src = min(max(src, 0.0), in_size - 1)

        lo = int(np.floor(src))
        frac = src - lo
        for index, weight in ((lo, 1.0 - frac), (lo + 1, frac)):
            if weight and 0 <= index < in_size:
                matrix[i, index] += weight

    return matrix


def resize_bilinear(
    x: Tensor,
    out_h: int,
    out_w: Optional[int] = None,
    scale: Optional[float] = None,
    offset: float = 0.0,
    fill: str = "border",
) -> Tensor:
    """Resamples a (C, H, W) map as Ry @ x @ Rx^T with constant interpolation matrices."""

    if x.ndim != 3:
        raise ShapeError("resize_bilinear", [x.shape], "expected (C, H, W)")

    out_w = out_w or out_h
    _, h, w = x.shape

    if (h, w) == (out_h, out_w) and scale is None and offset == 0.0:
        return x

    dtype = x.dtype
    ry = Tensor(interpolation_matrix(out_h, h, scale, offset, fill).astype(dtype))
    rx = Tensor(interpolation_matrix(out_w, w, scale, offset, fill).T.astype(dtype))

    rows = ops.matmul(x, rx, flop_kind="resample")

    return ops.matmul(ry, rows, flop_kind="resample")
