"""Flow interchange files: two-band float32, little-endian, row major.

Layout: 4-byte magic float, int32 width, int32 height, then width*height
(u, v) float32 pairs.  This module is self-contained on purpose; the
format is the contract between the dataset producer and this trainer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FLOW_MAGIC = 202021.25


class FlowFormatError(ValueError):
    pass


def write_flow(u: np.ndarray, v: np.ndarray, path: str | Path) -> None:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError(f"u and v must share a 2-D shape, got {u.shape} vs {v.shape}")
    height, width = u.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLOW_MAGIC))
        fh.write(struct.pack("<ii", width, height))
        inter = np.empty((height, width, 2), dtype="<f4")
        inter[..., 0] = u
        inter[..., 1] = v
        fh.write(inter.tobytes())


def read_flow(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a flow file; returns float32 (u, v) planes."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FlowFormatError(f"{path}: header truncated at {len(raw)} bytes")
    (magic,) = struct.unpack_from("<f", raw, 0)
    if magic != np.float32(FLOW_MAGIC):
        raise FlowFormatError(f"{path}: bad magic {magic!r}")
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"{path}: non-positive dimensions {width}x{height}")
    expected = 12 + width * height * 8
    if len(raw) < expected:
        raise FlowFormatError(f"{path}: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=width * height * 2, offset=12)
    planes = data.reshape(height, width, 2)
    return planes[..., 0].copy(), planes[..., 1].copy()
