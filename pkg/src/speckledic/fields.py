"""Ground-truth displacement fields: random node lattices and star targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .interpolate import Interp, catmull_rom_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DisplacementField:
    """Dense per-pixel displacement (u along x, v along y), float64."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 2 or u.size == 0:
            raise ValueError(f"u and v must share a non-empty 2-D shape, got {u.shape} vs {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("displacement field contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


def zero_field(width: int, height: int) -> DisplacementField:
    z = np.zeros((height, width))
    return DisplacementField(z, z.copy())


@dataclass(frozen=True)
class FieldGenSpec:
    """Random-field settings.

    Node displacements are drawn i.i.d. uniform on [-amplitude, amplitude]
    at a region_size-spaced lattice and interpolated between nodes, so
    region_size directly sets the finest spatial wavelength present.
    boundary_margin pixels at each frame edge are forced to zero (defaults
    to region_size) to keep warped content from leaving the frame.
    """

    region_size: int = 8
    amplitude: float = 1.0
    interp: Interp = Interp.BILINEAR
    boundary_margin: int | None = None

    def __post_init__(self):
        if self.region_size < 2:
            raise ValueError(f"region_size must be >= 2, got {self.region_size}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if self.boundary_margin is not None and self.boundary_margin < 0:
            raise ValueError("boundary_margin must be >= 0")

    @property
    def margin(self) -> int:
        return self.region_size if self.boundary_margin is None else self.boundary_margin


def node_lattice(length: int, region_size: int) -> np.ndarray:
    """Node coordinates 0, r, 2r, ... extended to cover index length - 1."""
    last = int(np.ceil((length - 1) / region_size)) * region_size
    return np.arange(0, last + 1, region_size)


def _interp_axis(values: np.ndarray, positions: np.ndarray, region_size: int, interp: Interp) -> np.ndarray:
    """Interpolate node values along the last axis at pixel positions."""
    n = values.shape[-1]
    t = positions / region_size
    i0 = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
    frac = t - i0
    if interp is Interp.BILINEAR:
        return values[..., i0] * (1 - frac) + values[..., i0 + 1] * frac
    w = catmull_rom_weights(frac)
    out = np.zeros(values.shape[:-1] + positions.shape)
    for m in range(4):
        idx = np.clip(i0 + m - 1, 0, n - 1)
        out += w[m] * values[..., idx]
    return out


def field_from_nodes(
    nodes_u: np.ndarray,
    nodes_v: np.ndarray,
    region_size: int,
    interp: Interp,
    width: int,
    height: int,
) -> DisplacementField:
    """Dense field from node values on the region_size lattice.

    Bicubic uses the Catmull-Rom kernel with edge nodes replicated, so it
    may overshoot the node range slightly between nodes; this is expected
    and left unclipped.
    """
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)

    def dense(nodes: np.ndarray) -> np.ndarray:
        rows = _interp_axis(nodes, xs, region_size, interp)
        return _interp_axis(rows.T, ys, region_size, interp).T

    return DisplacementField(dense(np.asarray(nodes_u, np.float64)), dense(np.asarray(nodes_v, np.float64)))


def random_field(spec: FieldGenSpec, width: int, height: int, seed: int) -> DisplacementField:
    """Random smooth field on a frame: draw nodes, interpolate, zero the rim."""
    nx = node_lattice(width, spec.region_size).size
    ny = node_lattice(height, spec.region_size).size
    rng = np.random.default_rng(seed)
    nodes_u = rng.uniform(-spec.amplitude, spec.amplitude, (ny, nx))
    nodes_v = rng.uniform(-spec.amplitude, spec.amplitude, (ny, nx))
    f = field_from_nodes(nodes_u, nodes_v, spec.region_size, spec.interp, width, height)

    peak = max(np.abs(f.u).max(), np.abs(f.v).max())
    if peak > spec.amplitude:
        logger.debug("bicubic node interpolation overshoots amplitude: %.4f > %.4f", peak, spec.amplitude)

    m = spec.margin
    if m > 0:
        u = f.u.copy()
        v = f.v.copy()
        for arr in (u, v):
            arr[:m, :] = 0.0
            arr[-m:, :] = 0.0
            arr[:, :m] = 0.0
            arr[:, -m:] = 0.0
        f = DisplacementField(u, v)
    return f


@dataclass(frozen=True)
class StarSpec:
    """Vertical-fringe target whose period grows linearly across the frame.

    v(x, y) = amplitude * cos(2 pi (y - center_row) / period(x)) with
    period(x) = period_min + (period_max - period_min) * x / (width - 1),
    and u identically zero.  Along the center row v equals the amplitude
    everywhere, which makes that row a direct read of the attenuation of
    any displacement estimator at every period.
    """

    width: int = 2000
    height: int = 501
    amplitude: float = 0.5
    period_min: float = 10.0
    period_max: float = 300.0

    def __post_init__(self):
        if self.width < 2 or self.height < 1:
            raise ValueError(f"frame must be at least 2x1, got {self.width}x{self.height}")
        if not 0 < self.period_min <= self.period_max:
            raise ValueError(
                f"need 0 < period_min <= period_max, got {self.period_min}, {self.period_max}"
            )
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")

    @property
    def center_row(self) -> float:
        return (self.height - 1) / 2.0

    def period_at(self, x: np.ndarray | float) -> np.ndarray | float:
        return self.period_min + (self.period_max - self.period_min) * np.asarray(x) / (self.width - 1)

    def column_at(self, period: np.ndarray | float) -> np.ndarray | float:
        """Inverse of period_at; exact because the map is affine."""
        if self.period_max == self.period_min:
            raise ValueError("period is constant, column lookup is undefined")
        return (np.asarray(period) - self.period_min) * (self.width - 1) / (self.period_max - self.period_min)


def star_field(spec: StarSpec) -> DisplacementField:
    """Dense ground truth of the star target."""
    xs = np.arange(spec.width, dtype=np.float64)
    ys = np.arange(spec.height, dtype=np.float64)
    period = spec.period_at(xs)
    phase = 2.0 * np.pi * (ys[:, None] - spec.center_row) / period[None, :]
    v = spec.amplitude * np.cos(phase)
    return DisplacementField(np.zeros_like(v), v)


def resample_diagnostic(field: DisplacementField, factor: int) -> DisplacementField:
    """Down-sample by point decimation, then bilinear up-sample back.

    Mimics estimating at a coarse stride and interpolating to full frame;
    content with period below twice the factor aliases visibly, which is
    the effect this diagnostic exists to expose.
    """
    if factor < 2:
        raise ValueError(f"factor must be >= 2, got {factor}")
    if factor > min(field.width, field.height):
        raise ValueError(f"factor {factor} exceeds the frame {field.width}x{field.height}")

    def one(arr: np.ndarray) -> np.ndarray:
        coarse = arr[::factor, ::factor]
        ch, cw = coarse.shape
        xs = np.arange(field.width, dtype=np.float64) / factor
        ys = np.arange(field.height, dtype=np.float64) / factor
        x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(cw - 2, 0))
        y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(ch - 2, 0))
        tx = np.clip(xs - x0, 0.0, 1.0)
        ty = np.clip(ys - y0, 0.0, 1.0)
        x1 = np.minimum(x0 + 1, cw - 1)
        y1 = np.minimum(y0 + 1, ch - 1)
        top = coarse[y0][:, x0] * (1 - tx) + coarse[y0][:, x1] * tx
        bot = coarse[y1][:, x0] * (1 - tx) + coarse[y1][:, x1] * tx
        return top * (1 - ty[:, None]) + bot * ty[:, None]

    return DisplacementField(one(field.u), one(field.v))
