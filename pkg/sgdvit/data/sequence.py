"""
Sequence directories: PPM frames sorted by file name plus `groundtruth.txt`, one
x,y,w,h box per line (top-left corner, comma or whitespace separated).
"""

from __future__ import annotations

import os
import re
import csv
import logging

from typing import List, Iterator, Sequence as SequenceT
from dataclasses import dataclass

import numpy as np

from ..utils.imageio import ImageFormatError, read_ppm
from ..tracking.geometry import BBox

log = logging.getLogger(__name__)

GROUNDTRUTH_FILENAME = "groundtruth.txt"
FRAME_EXTENSION = ".ppm"

_SEPARATOR = re.compile(r"[,\s]+")


class DataError(Exception):
    pass


def parse_boxes(lines: SequenceT[str], source: str) -> List[BBox]:
    boxes = []
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue

        parts = [p for p in _SEPARATOR.split(line) if p]
        if len(parts) != 4:
            raise DataError(f"{source}:{number}: expected x,y,w,h, got {line!r}")

        try:
            x, y, w, h = (float(p) for p in parts)
        except ValueError:
            raise DataError(f"{source}:{number}: non-numeric box {line!r}")

        boxes.append(BBox.from_xywh(x, y, w, h))

    return boxes


def read_boxes(path: str) -> List[BBox]:
    if not os.path.exists(path):
        raise DataError(f"{path} does not exist")

    with open(path, "r") as f:
        return parse_boxes(f.readlines(), path)


def read_groundtruth(path: str) -> List[BBox]:
    boxes = read_boxes(path)
    if not boxes:
        raise DataError(f"{path}: missing groundtruth first line")

    return boxes


def format_box(box: BBox) -> str:
    return ",".join(f"{v:.4f}" for v in box.to_xywh())


def write_boxes(path: str, boxes: SequenceT[BBox]) -> None:
    with open(path, "w") as f:
        for box in boxes:
            f.write(format_box(box) + "\n")


def write_confidences(path: str, confidences: SequenceT[float]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("frame", "confidence"))

        for index, confidence in enumerate(confidences):
            writer.writerow((index, f"{confidence:.6f}"))


@dataclass
class Sequence:
    path: str
    frame_paths: List[str]
    groundtruth: List[BBox]

    @property
    def name(self) -> str:
        return os.path.basename(os.path.normpath(self.path))

    def __len__(self) -> int:
        return len(self.frame_paths)

    def frame(self, index: int) -> np.ndarray:
        try:
            return read_ppm(self.frame_paths[index])
        except ImageFormatError as e:
            raise DataError(str(e))

    def frames(self) -> Iterator[np.ndarray]:
        for index in range(len(self)):
            yield self.frame(index)


def load_sequence(path: str) -> Sequence:
    if not os.path.isdir(path):
        raise DataError(f"sequence directory {path} does not exist")

    frame_paths = sorted(
        os.path.join(path, name)
        for name in os.listdir(path)
        if name.lower().endswith(FRAME_EXTENSION)
    )
    if not frame_paths:
        raise DataError(f"{path} contains no {FRAME_EXTENSION} frames")

    groundtruth = read_groundtruth(os.path.join(path, GROUNDTRUTH_FILENAME))
    if not groundtruth[0].is_valid:
        raise DataError(f"{path}: first groundtruth box {groundtruth[0]} is degenerate")

    if len(groundtruth) not in (1, len(frame_paths)):
        log.warning(
            f"{path}: {len(groundtruth)} groundtruth boxes for {len(frame_paths)} frames"
        )

    return Sequence(path=path, frame_paths=frame_paths, groundtruth=groundtruth)
