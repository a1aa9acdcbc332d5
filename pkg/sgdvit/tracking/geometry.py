"""
Box and crop geometry shared by the tracker and the toy trainer.

Frames are (H, W, 3) arrays with pixel centres at integer coordinates. A crop of side
`side` around (cx, cy) resampled to `out` pixels maps crop pixel p to frame coordinate
c + (p - (out - 1) / 2) * side / out.
"""

from __future__ import annotations

import math

from typing import Tuple
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> BBox:
        """From an OTB-style top-left corner box."""

        return cls(x + w / 2, y + h / 2, w, h)

    def to_xywh(self) -> Tuple[float, float, float, float]:
        return self.cx - self.w / 2, self.cy - self.h / 2, self.w, self.h

    @property
    def is_valid(self) -> bool:
        values = (self.cx, self.cy, self.w, self.h)

        return all(math.isfinite(v) for v in values) and self.w > 0 and self.h > 0

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> Tuple[float, float, float, float]:
        return self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2

    def clamp(self, frame_w: int, frame_h: int, min_size: float = 1.0) -> BBox:
        cx = min(max(self.cx, 0.0), float(frame_w))
        cy = min(max(self.cy, 0.0), float(frame_h))
        w = min(max(self.w, min_size), float(frame_w))
        h = min(max(self.h, min_size), float(frame_h))

        return BBox(cx, cy, w, h)


def crop_sides(
    box: BBox, context: float = 0.5, template_size: int = 127, search_size: int = 287
) -> Tuple[float, float]:
    """Template side sqrt((w + p)(h + p)) with p = context * (w + h); search side scaled by search/template."""

    pad = context * (box.w + box.h)
    template_side = math.sqrt((box.w + pad) * (box.h + pad))

    return template_side, template_side * search_size / template_size


@dataclass
class Crop:
    pixels: np.ndarray
    cx: float
    cy: float
    side: float
    out_size: int
    # share of the crop square lying outside the frame, filled with the channel mean
    padding_fraction: float

    @property
    def scale(self) -> float:
        """Frame pixels per crop pixel."""

        return self.side / self.out_size

    def to_frame(self, px: float, py: float) -> Tuple[float, float]:
        centre = (self.out_size - 1) / 2

        return self.cx + (px - centre) * self.scale, self.cy + (py - centre) * self.scale

    def from_frame(self, x: float, y: float) -> Tuple[float, float]:
        centre = (self.out_size - 1) / 2

        return (x - self.cx) / self.scale + centre, (y - self.cy) / self.scale + centre


def padding_fraction(cx: float, cy: float, side: float, frame_w: int, frame_h: int) -> float:
    """Area share of the square crop outside the sampled frame extent [0, W-1] x [0, H-1]."""

    def overlap(lo: float, hi: float, limit: float) -> float:
        return max(0.0, min(hi, limit) - max(lo, 0.0))

    half = side / 2
    inside = overlap(cx - half, cx + half, frame_w - 1) * overlap(cy - half, cy + half, frame_h - 1)

    return 1.0 - inside / (side * side)


def crop_frame(frame: np.ndarray, cx: float, cy: float, side: float, out_size: int) -> Crop:
    """Bilinear square crop; samples outside the frame take the per-channel mean."""

    h, w = frame.shape[:2]
    image = frame.astype(np.float64)
    mean = image.reshape(-1, image.shape[2]).mean(axis=0)

    scale = side / out_size
    offsets = (np.arange(out_size) - (out_size - 1) / 2) * scale
    xs = cx + offsets
    ys = cy + offsets

    valid_x = (xs >= 0) & (xs <= w - 1)
    valid_y = (ys >= 0) & (ys <= h - 1)

    def taps(coords: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = np.clip(coords, 0, size - 1)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, size - 1)

        return lo, hi, coords - lo

    x0, x1, fx = taps(xs, w)
    y0, y1, fy = taps(ys, h)

    top = image[y0][:, x0] * (1 - fx)[None, :, None] + image[y0][:, x1] * fx[None, :, None]
    bottom = image[y1][:, x0] * (1 - fx)[None, :, None] + image[y1][:, x1] * fx[None, :, None]
    pixels = top * (1 - fy)[:, None, None] + bottom * fy[:, None, None]

    valid = valid_y[:, None] & valid_x[None, :]
    pixels = np.where(valid[:, :, None], pixels, mean)

    return Crop(
        pixels=pixels,
        cx=cx,
        cy=cy,
        side=side,
        out_size=out_size,
        padding_fraction=padding_fraction(cx, cy, side, w, h),
    )


@dataclass(frozen=True)
class GridGeometry:
    """
    Maps the G x G head grid onto search-crop pixels. Grid cell g sits at feature
    position g * (F - 1) / (G - 1) and feature position f at crop pixel
    offset + stride * f, with the feature span centred in the crop.
    """

    grid: int
    search_size: int = 287
    feature_size: int = 26
    stride: int = 8

    @property
    def offset(self) -> float:
        return (self.search_size - 1 - self.stride * (self.feature_size - 1)) / 2

    @property
    def step(self) -> float:
        """Crop pixels per grid cell."""

        return self.stride * (self.feature_size - 1) / (self.grid - 1)

    def to_crop(self, g: float) -> float:
        return self.offset + g * self.step

    def to_grid(self, p: float) -> float:
        return (p - self.offset) / self.step


def hanning_window(grid: int) -> np.ndarray:
    window = np.hanning(grid)

    return np.outer(window, window)
