"""Multi-scale endpoint-error loss.

Each side output is scored by the average endpoint error against the
ground truth brought to that scale by average pooling of the u and v
planes separately; the total is the weight-sum over levels.
"""

from __future__ import annotations

import torch
from torch.nn import functional as F

from .config import LossSpec


def endpoint_error(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean Euclidean error between two (batch, 2, H, W) flow tensors."""
    if output.shape != target.shape:
        raise ValueError(f"shapes differ: {tuple(output.shape)} vs {tuple(target.shape)}")
    return torch.linalg.vector_norm(output - target, dim=1).mean()


def pool_ground_truth(gt: torch.Tensor, factor: int) -> torch.Tensor:
    if factor == 1:
        return gt
    return F.avg_pool2d(gt, factor)


def multiscale_loss(
    level_outputs: list[torch.Tensor],
    gt: torch.Tensor,
    spec: LossSpec,
) -> torch.Tensor:
    """Weighted sum of per-level endpoint errors, levels coarsest first."""
    if len(level_outputs) != len(spec.weights):
        raise ValueError(
            f"{len(level_outputs)} levels but {len(spec.weights)} weights"
        )
    height = gt.shape[2]
    total = gt.new_zeros(())
    for out, weight in zip(level_outputs, spec.weights):
        if weight == 0.0:
            continue
        factor = height // out.shape[2]
        if factor * out.shape[2] != height:
            raise ValueError(
                f"level height {out.shape[2]} does not divide ground truth {height}"
            )
        total = total + weight * endpoint_error(out, pool_ground_truth(gt, factor))
    return total
