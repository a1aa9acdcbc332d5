"""
Deterministic synthetic sequences with exact ground truth. Stress axes: scale
variation s(t), aspect ratio change a(t), background clutter and low resolution.
The box at frame t measures (base_w * s(t) * a(t), base_h * s(t) / a(t)).
"""

from __future__ import annotations

import os
import math
import logging

from typing import Any, Dict, List, Tuple, Mapping
from dataclasses import fields, asdict, dataclass

import numpy as np

from ruamel.yaml import YAML

from ..autodiff import make_rng
from ..utils.imageio import write_ppm
from ..tracking.geometry import BBox
from .sequence import GROUNDTRUTH_FILENAME, DataError, write_boxes

log = logging.getLogger(__name__)

OBJECT_KINDS = ("textured", "rectangle", "ellipse")
MOTIONS = ("static", "linear", "sinusoidal")

TEXTURE_SIZE = 16


class SynthSpecError(DataError):
    def __init__(self, field_name: str, msg: str):
        self.field_name = field_name

        super().__init__(msg)

    def __str__(self) -> str:
        return f"{self.field_name}: {self.args[0]}"


@dataclass(frozen=True)
class SynthSpec:
    frame_size: Tuple[int, int] = (320, 240)
    frames: int = 20
    object_kind: str = "textured"
    base_size: Tuple[float, float] = (40.0, 30.0)
    start: Tuple[float, float] = (160.0, 120.0)
    motion: str = "linear"
    # pixels per frame for linear motion
    velocity: Tuple[float, float] = (2.0, 1.0)
    # sinusoidal motion: peak offset and period in frames
    amplitude: Tuple[float, float] = (40.0, 20.0)
    period: float = 20.0
    scale: Tuple[float, float] = (1.0, 1.0)
    aspect: Tuple[float, float] = (1.0, 1.0)
    background: float = 40.0
    contrast: float = 60.0
    clutter: int = 3
    clutter_contrast: float = 40.0
    noise: float = 4.0
    downscale: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SynthSpec:
        known = {f.name: f for f in fields(cls)}

        values: Dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise SynthSpecError(key, "unknown synth spec key")

            values[key] = tuple(value) if isinstance(value, (list, tuple)) else value

        spec = cls(**values)
        spec.validate()

        return spec

    @classmethod
    def load(cls, path: str) -> SynthSpec:
        if not os.path.exists(path):
            raise DataError(f"synth spec {path} does not exist")

        with open(path, "r") as f:
            data = YAML(typ="safe").load(f) or {}

        if not isinstance(data, dict):
            raise SynthSpecError(path, "synth spec must be a mapping")

        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def scale_at(self, t: int) -> float:
        return _lerp(self.scale, t, self.frames)

    def aspect_at(self, t: int) -> float:
        return _lerp(self.aspect, t, self.frames)

    def centre_at(self, t: int) -> Tuple[float, float]:
        x0, y0 = self.start

        if self.motion == "linear":
            return x0 + self.velocity[0] * t, y0 + self.velocity[1] * t

        if self.motion == "sinusoidal":
            phase = math.sin(2 * math.pi * t / self.period)

            return x0 + self.amplitude[0] * phase, y0 + self.amplitude[1] * phase

        return x0, y0

    def box_at(self, t: int) -> BBox:
        s, a = self.scale_at(t), self.aspect_at(t)
        cx, cy = self.centre_at(t)
        bw, bh = self.base_size

        return BBox(cx, cy, bw * s * a, bh * s / a)

    def validate(self) -> None:
        width, height = self.frame_size

        if width < 8 or height < 8:
            raise SynthSpecError("frame_size", f"{self.frame_size} is too small")
        if self.frames < 1:
            raise SynthSpecError("frames", "need at least one frame")
        if self.object_kind not in OBJECT_KINDS:
            raise SynthSpecError("object_kind", f"expected one of {OBJECT_KINDS}")
        if self.motion not in MOTIONS:
            raise SynthSpecError("motion", f"expected one of {MOTIONS}")
        if self.motion == "sinusoidal" and self.period <= 0:
            raise SynthSpecError("period", "must be > 0")
        if min(self.base_size) <= 0:
            raise SynthSpecError("base_size", "must be positive")
        if min(self.scale) <= 0 or min(self.aspect) <= 0:
            raise SynthSpecError("scale", "scale and aspect trajectories must stay positive")
        if self.contrast <= 0 or self.background + self.contrast > 255:
            raise SynthSpecError("contrast", "background + contrast must fit in 0..255")
        if self.clutter < 0 or self.background + self.clutter_contrast > 255:
            raise SynthSpecError("clutter", "bad clutter count or contrast")
        if self.noise < 0:
            raise SynthSpecError("noise", "must be >= 0")
        if self.downscale < 1:
            raise SynthSpecError("downscale", "must be >= 1")

        for t in range(self.frames):
            x1, y1, x2, y2 = self.box_at(t).corners()
            if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
                raise SynthSpecError(
                    "motion", f"box leaves the {width}x{height} frame at frame {t}: {self.box_at(t)}"
                )


def _lerp(bounds: Tuple[float, float], t: int, frames: int) -> float:
    start, end = bounds
    if frames <= 1:
        return start

    return start + (end - start) * t / (frames - 1)


def _texture(rng: np.random.Generator, low: float) -> np.ndarray:
    """Fixed random texture with every value in [low, 255]."""

    return rng.uniform(low, 255.0, size=(TEXTURE_SIZE, TEXTURE_SIZE, 3))


def _paint(canvas: np.ndarray, box: BBox, texture: np.ndarray, kind: str) -> None:
    """Draws texture warped onto box; pixels x1 <= x < x2, y1 <= y < y2 are covered."""

    height, width = canvas.shape[:2]
    x1, y1, x2, y2 = box.corners()

    cols = np.arange(max(0, math.ceil(x1)), min(width, math.ceil(x2)))
    rows = np.arange(max(0, math.ceil(y1)), min(height, math.ceil(y2)))
    if not cols.size or not rows.size:
        return

    u = ((cols - x1) / box.w * texture.shape[1]).astype(np.int64).clip(0, texture.shape[1] - 1)
    v = ((rows - y1) / box.h * texture.shape[0]).astype(np.int64).clip(0, texture.shape[0] - 1)

    if kind == "textured":
        patch = texture[v][:, u]
    else:
        patch = np.broadcast_to(texture.mean(axis=(0, 1)), (rows.size, cols.size, 3))

    region = canvas[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    if kind == "ellipse":
        dx = (cols - box.cx) / (box.w / 2)
        dy = (rows - box.cy) / (box.h / 2)
        inside = (dy[:, None] ** 2 + dx[None, :] ** 2) <= 1.0
        region[inside] = patch[inside]
    else:
        region[:] = patch


def generate_sequence(spec: SynthSpec) -> Tuple[List[np.ndarray], List[BBox]]:
    spec.validate()

    rng = make_rng(spec.seed)
    width, height = spec.frame_size

    target_texture = _texture(rng, spec.background + spec.contrast)

    clutter = []
    for _ in range(spec.clutter):
        texture = _texture(rng, spec.background + spec.clutter_contrast)
        bw, bh = spec.base_size
        w, h = bw * rng.uniform(0.6, 1.2), bh * rng.uniform(0.6, 1.2)
        cx, cy = rng.uniform(w / 2, width - w / 2), rng.uniform(h / 2, height - h / 2)
        clutter.append((BBox(cx, cy, w, h), texture))

    frames: List[np.ndarray] = []
    boxes: List[BBox] = []
    for t in range(spec.frames):
        canvas = np.full((height, width, 3), spec.background)

        for box, texture in clutter:
            _paint(canvas, box, texture, "textured")

        box = spec.box_at(t)
        _paint(canvas, box, target_texture, spec.object_kind)

        if spec.downscale > 1:
            k = spec.downscale
            small = canvas[::k, ::k]
            canvas = np.repeat(np.repeat(small, k, axis=0), k, axis=1)[:height, :width]

        if spec.noise > 0:
            canvas = canvas + rng.normal(0.0, spec.noise, size=canvas.shape)

        frames.append(np.clip(np.round(canvas), 0, 255).astype(np.uint8))
        boxes.append(box)

    return frames, boxes


def write_sequence(path: str, frames: List[np.ndarray], boxes: List[BBox]) -> None:
    os.makedirs(path, exist_ok=True)

    for index, frame in enumerate(frames, start=1):
        write_ppm(os.path.join(path, f"{index:04d}.ppm"), frame)

    write_boxes(os.path.join(path, GROUNDTRUTH_FILENAME), boxes)

    log.info(f"wrote {len(frames)} frames to {path}")
