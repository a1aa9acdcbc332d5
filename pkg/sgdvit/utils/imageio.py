"""Frame and saliency image files through Pillow: RGB PPM (P6) in and out, PGM (P5) out."""

from __future__ import annotations

import numpy as np

from PIL import Image, UnidentifiedImageError


class ImageFormatError(Exception):
    def __init__(self, path: str, msg: str):
        self.path = path

        super().__init__(msg)

    def __str__(self) -> str:
        return f"{self.path}: {self.args[0]}"


def read_ppm(path: str) -> np.ndarray:
    """(H, W, 3) uint8 array from an 8-bit RGB PPM."""

    try:
        with Image.open(path) as image:
            kind = (image.format, image.mode)
            pixels = np.asarray(image.convert("RGB")) if kind == ("PPM", "RGB") else None
    except (UnidentifiedImageError, SyntaxError, ValueError, OSError) as e:
        raise ImageFormatError(path, f"unreadable image: {e}")

    if pixels is None:
        raise ImageFormatError(path, f"expected an RGB PPM, got {kind[0]} in mode {kind[1]}")

    return pixels


def _save(path: str, pixels: np.ndarray) -> None:
    try:
        Image.fromarray(pixels).save(path, format="PPM")
    except (ValueError, OSError) as e:
        raise ImageFormatError(path, f"cannot write image: {e}")


def write_ppm(path: str, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(path, f"expected (H, W, 3) pixels, got {image.shape}")

    _save(path, np.clip(np.round(image), 0, 255).astype(np.uint8))


def write_pgm(path: str, image: np.ndarray) -> None:
    """Mode L images are written as P5."""

    image = np.asarray(image)
    if image.ndim != 2:
        raise ImageFormatError(path, f"expected (H, W) pixels, got {image.shape}")

    _save(path, np.clip(np.round(image), 0, 255).astype(np.uint8))


def to_grayscale_u8(values: np.ndarray) -> np.ndarray:
    """Min-max normalization to 0..255; a constant map becomes all zeros."""

    values = np.asarray(values, dtype=np.float64)
    low, high = values.min(), values.max()
    if high - low <= 0:
        return np.zeros(values.shape, dtype=np.uint8)

    return np.round((values - low) / (high - low) * 255.0).astype(np.uint8)
