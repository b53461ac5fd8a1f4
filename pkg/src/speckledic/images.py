"""Grayscale image container and 8/16-bit PNG round-trip."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image, float64 gray levels, row-major (y, x).

    Values are continuous gray levels; quantization to integer levels is a
    separate, explicit step.  Pixel centers sit at integer coordinates, so
    pixel (y, x) covers the square [x - 0.5, x + 0.5) x [y - 0.5, y + 0.5).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"expected a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def save_png(img: GrayImage, path: str | Path, bit_depth: int = 8) -> None:
    """Write a quantized image as a single-channel PNG.

    Parameters
    ----------
    img : GrayImage
        Values must already lie on integer levels in [0, 2**bit_depth - 1];
        this writer refuses to quantize silently.
    bit_depth : int
        8 or 16.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    v = img.values
    if np.any(v < 0) or np.any(v > 2**bit_depth - 1):
        raise ValueError("image values outside the PNG dynamic range; quantize first")
    if not np.array_equal(v, np.floor(v)):
        raise ValueError("image values are not on integer levels; quantize first")
    if bit_depth == 8:
        Image.fromarray(v.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(v.astype(np.uint16)).save(path)


def load_png(path: str | Path) -> GrayImage:
    """Read a single-channel PNG back into float64 gray levels."""
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16"):
            raise ValueError(f"expected a grayscale PNG, got mode {im.mode!r}")
        arr = np.asarray(im, dtype=np.float64)
    return GrayImage(arr)
