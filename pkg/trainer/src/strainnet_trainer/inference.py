"""Run a trained network on one frame pair and export the flow."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F

from .config import Variant
from .data import load_frame, normalize_frame
from .flow_io import write_flow
from .training import load_checkpoint


def infer(
    checkpoint: str | Path,
    ref_path: str | Path,
    def_path: str | Path,
    out_flow: str | Path | None = None,
    variant: Variant | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the flow from ref to def; returns (u, v) float32 planes.

    Frames are padded (edge replication, right and bottom) up to the
    network's divisibility constraint and the padding is cropped from
    the output.  Normalization follows the scheme stored alongside the
    weights.
    """
    model, payload = load_checkpoint(checkpoint)
    if variant is not None and model.spec.variant is not variant:
        raise ValueError(
            f"checkpoint was trained for variant {model.spec.variant.value!r}, "
            f"requested {variant.value!r}"
        )
    norm = payload["normalization"]
    if norm["kind"] != "per_image":
        raise ValueError(f"unknown normalization scheme {norm['kind']!r} in checkpoint")

    ref = normalize_frame(load_frame(ref_path), norm["eps"])
    dfm = normalize_frame(load_frame(def_path), norm["eps"])
    if ref.shape != dfm.shape:
        raise ValueError(f"frame shapes differ: {ref.shape} vs {dfm.shape}")
    height, width = ref.shape

    d = model.spec.divisor
    pad_h = (-height) % d
    pad_w = (-width) % d
    x = torch.from_numpy(np.stack([ref, dfm]))[None]
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")

    with torch.no_grad():
        _, full = model(x)
    flow = full[0, :, :height, :width].numpy()
    u, v = flow[0], flow[1]
    if out_flow is not None:
        write_flow(u, v, out_flow)
    return u, v
