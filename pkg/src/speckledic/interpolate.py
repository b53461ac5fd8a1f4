"""Shared interpolation kernels for fields and image warping."""

from __future__ import annotations

from enum import Enum

import numpy as np


class Interp(Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


def catmull_rom_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    """Weights for samples at offsets (-1, 0, 1, 2), fraction t in [0, 1).

    The a = -1/2 cubic convolution kernel: reproduces quadratics, and at
    t = 0 the weights are exactly (0, 1, 0, 0) so on-grid samples pass
    through untouched, bit for bit.
    """
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w1 = 1.5 * t3 - 2.5 * t2 + 1.0
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    return w0, w1, w2, w3


def sample_bilinear(arr: np.ndarray, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Bilinear sample of a 2-D array at fractional (qx, qy), edge-clamped.

    Clamping holds the edge value, which suits displacement fields whose
    boundary ring is zero by construction.
    """
    h, w = arr.shape
    qx = np.clip(qx, 0.0, w - 1.0)
    qy = np.clip(qy, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(qx), w - 2).astype(np.int64) if w > 1 else np.zeros(qx.shape, np.int64)
    y0 = np.minimum(np.floor(qy), h - 2).astype(np.int64) if h > 1 else np.zeros(qy.shape, np.int64)
    tx = qx - x0
    ty = qy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    v00 = arr[y0, x0]
    v01 = arr[y0, x1]
    v10 = arr[y1, x0]
    v11 = arr[y1, x1]
    return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11)


def sample_image(
    arr: np.ndarray,
    qx: np.ndarray,
    qy: np.ndarray,
    interp: Interp,
    fill: float,
) -> np.ndarray:
    """Sample an image at fractional positions; out-of-frame reads `fill`.

    The image is padded with the fill value far enough to cover every
    query, so no index clamping distorts values near the border.
    """
    h, w = arr.shape
    pad_l = int(max(2, np.ceil(2.0 - qx.min()))) if qx.size else 2
    pad_r = int(max(2, np.ceil(qx.max() - (w - 3)))) if qx.size else 2
    pad_t = int(max(2, np.ceil(2.0 - qy.min()))) if qy.size else 2
    pad_b = int(max(2, np.ceil(qy.max() - (h - 3)))) if qy.size else 2
    padded = np.pad(arr, ((pad_t, pad_b), (pad_l, pad_r)), constant_values=fill)
    px = qx + pad_l
    py = qy + pad_t

    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    tx = px - x0
    ty = py - y0
    if interp is Interp.BILINEAR:
        out = (1 - ty) * ((1 - tx) * padded[y0, x0] + tx * padded[y0, x0 + 1]) + ty * (
            (1 - tx) * padded[y0 + 1, x0] + tx * padded[y0 + 1, x0 + 1]
        )
        return out
    wx = catmull_rom_weights(tx)
    wy = catmull_rom_weights(ty)
    out = np.zeros(qx.shape)
    for n in range(4):
        row = np.zeros(qx.shape)
        for m in range(4):
            row += wx[m] * padded[y0 + n - 1, x0 + m - 1]
        out += wy[n] * row
    return out
