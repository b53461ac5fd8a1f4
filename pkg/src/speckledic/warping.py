"""Deforming speckle frames: kernel warps, exact re-rendering, sensor noise."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fields import DisplacementField
from .images import GrayImage
from .interpolate import Interp, sample_bilinear, sample_image
from .speckle import DiskSet, SpeckleParams, render_coverage

logger = logging.getLogger(__name__)


class RenderError(RuntimeError):
    """Exact re-rendering failed; carries a per-pixel non-convergence map."""

    def __init__(self, message: str, diagnostic: np.ndarray):
        super().__init__(message)
        self.diagnostic = diagnostic


def warp(
    ref: GrayImage,
    field: DisplacementField,
    interp: Interp = Interp.BICUBIC,
    fill: float = 200.0,
) -> GrayImage:
    """Deformed frame sampled as deformed(x) = ref(x - u(x)).

    The displacement is expressed at deformed-frame pixels, so no field
    inversion is needed; out-of-frame samples read `fill`.
    """
    if (field.height, field.width) != ref.values.shape:
        raise ValueError(
            f"field {field.width}x{field.height} does not match image "
            f"{ref.width}x{ref.height}"
        )
    ys, xs = np.mgrid[0 : ref.height, 0 : ref.width]
    qx = xs.astype(np.float64) - field.u
    qy = ys.astype(np.float64) - field.v
    out = sample_image(ref.values, qx.ravel(), qy.ravel(), interp, fill)
    return GrayImage(out.reshape(ref.values.shape))


def render_deformed_speckle(
    disks: DiskSet,
    field: DisplacementField,
    params: SpeckleParams,
    supersample: int = 8,
    tol: float = 1e-6,
    max_iter: int = 50,
    max_fail_fraction: float = 1e-4,
) -> GrayImage:
    """Re-render the pattern under a deformation, interpolation-free.

    The displacement maps reference positions to deformed ones, so each
    probe at deformed position p must be evaluated at the reference
    position q solving q = p - u(q).  That fixed point is contractive
    whenever the displacement gradient stays below one, which holds for
    every field in scope; u is read off the dense field bilinearly.

    With the zero field the fixed point returns the probes untouched and
    the output is bit-identical to render_speckle.
    """
    if (field.height, field.width) != (params.height, params.width):
        raise ValueError(
            f"field {field.width}x{field.height} does not match frame "
            f"{params.width}x{params.height}"
        )
    fail_counts = np.zeros((params.height, params.width))
    samples_total = [0]

    def inverse_map(px: np.ndarray, py: np.ndarray):
        qx = px.copy()
        qy = py.copy()
        delta = np.inf
        for _ in range(max_iter):
            u = sample_bilinear(field.u, qx, qy)
            v = sample_bilinear(field.v, qx, qy)
            nx = px - u
            ny = py - v
            delta = max(np.abs(nx - qx).max(initial=0.0), np.abs(ny - qy).max(initial=0.0))
            qx, qy = nx, ny
            if delta <= tol:
                break
        if delta > tol:
            # Book-keep per-pixel failures for the diagnostic map.
            ru = sample_bilinear(field.u, qx, qy)
            rv = sample_bilinear(field.v, qx, qy)
            bad = np.maximum(np.abs(px - ru - qx), np.abs(py - rv - qy)) > tol
            ix = np.clip(np.rint(px[bad]), 0, params.width - 1).astype(np.int64)
            iy = np.clip(np.rint(py[bad]), 0, params.height - 1).astype(np.int64)
            np.add.at(fail_counts, (iy, ix), 1)
        samples_total[0] += px.size
        return qx, qy

    cov = render_coverage(disks, params.width, params.height, supersample, inverse_map=inverse_map)
    n_fail = fail_counts.sum()
    if samples_total[0] and n_fail / samples_total[0] > max_fail_fraction:
        raise RenderError(
            f"fixed point failed at {int(n_fail)} of {samples_total[0]} probes "
            f"(> {max_fail_fraction:.0e}); displacement gradient likely too steep",
            fail_counts,
        )
    span = params.contrast * (params.background - params.foreground)
    return GrayImage(params.background - span * cov)


@dataclass(frozen=True)
class NoiseModel:
    """Heteroscedastic sensor noise: variance affine in the signal level.

    Defaults reproduce a real camera calibration at 8-bit scale; variance
    is clipped at zero for levels where the affine model would go negative.
    """

    gain: float = 0.0342
    offset: float = 0.2679

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError(f"gain must be >= 0, got {self.gain}")

    def std(self, signal: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.gain * signal + self.offset, 0.0))


def add_noise(img: GrayImage, model: NoiseModel, seed: int) -> GrayImage:
    """Add one heteroscedastic noise realization, before any quantization."""
    rng = np.random.default_rng(seed)
    noisy = img.values + rng.standard_normal(img.values.shape) * model.std(img.values)
    return GrayImage(noisy)


def quantize(img: GrayImage, bit_depth: int = 8) -> GrayImage:
    """Round half-up to integer gray levels and clip to the bit depth."""
    if bit_depth < 1:
        raise ValueError(f"bit_depth must be >= 1, got {bit_depth}")
    q = np.floor(img.values + 0.5)
    return GrayImage(np.clip(q, 0.0, float(2**bit_depth - 1)))
