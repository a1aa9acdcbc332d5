from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import ShapeError, default_dtype

BASE = 10000.0


def sinusoidal_2d(ys: Sequence[float], xs: Sequence[float], dim: int) -> np.ndarray:
    """
    Fixed encodings for points (y, x), shape (len(ys), dim). The first half of the
    channels encodes y, the second half x, each as interleaved sin/cos pairs.
    Coordinates may be fractional, so coarse and fine token centres share one scale.
    """

    if dim % 4:
        raise ShapeError("sinusoidal_2d", [(dim,)], "dim must be a multiple of 4")

    ys = np.asarray(ys, dtype=np.float64).reshape(-1, 1)
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 1)
    if ys.shape != xs.shape:
        raise ShapeError("sinusoidal_2d", [ys.shape, xs.shape])

    quarter = dim // 4
    freqs = BASE ** (-np.arange(quarter) / quarter)

    out = np.empty((ys.shape[0], dim))
    for offset, coord in ((0, ys), (dim // 2, xs)):
        angles = coord * freqs
        out[:, offset : offset + 2 * quarter : 2] = np.sin(angles)
        out[:, offset + 1 : offset + 2 * quarter : 2] = np.cos(angles)

    return out.astype(default_dtype())


def grid_encoding(size: int, dim: int) -> np.ndarray:
    """Encodings of every cell of a size x size grid, row-major."""

    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")

    return sinusoidal_2d(ys.reshape(-1), xs.reshape(-1), dim)
