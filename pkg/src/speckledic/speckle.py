"""Random speckle patterns as Boolean models of opaque disks.

A pattern is a set of disks with random centers and radii.  Rendering is
physically flat: pixel intensity depends only on the fraction of the pixel
area covered by the disk union, estimated by stratified supersampling, so
the same DiskSet can be re-rendered under any continuous deformation
without an image-interpolation kernel.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .images import GrayImage

logger = logging.getLogger(__name__)

# Keep per-tile sample blocks small enough that the candidate expansion in
# the disk index stays within a few hundred MB.
_MAX_SAMPLES_PER_TILE = 4_000_000


class RadiusDistribution(Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    POISSON = "poisson"


@dataclass(frozen=True)
class SpeckleParams:
    """Speckle pattern description.

    Attributes
    ----------
    width, height : int
        Frame size in pixels.
    radius_dist : RadiusDistribution
        Law of the disk radii.
    mean_radius : float
        Mean of the radius law, pixels.  Uniform draws on (0, 2 * mean),
        Poisson draws are rejected at zero so radii stay positive.
    disk_count_mean : float
        Mean of the Poisson-distributed number of disks.
    contrast : float
        Blending weight in (0, 1]; 1 makes covered pixels reach the
        foreground level exactly.
    background, foreground : float
        Gray levels of bare and fully covered pixels.
    """

    width: int
    height: int
    radius_dist: RadiusDistribution = RadiusDistribution.UNIFORM
    mean_radius: float = 0.6
    disk_count_mean: float = 36_000.0
    contrast: float = 1.0
    background: float = 200.0
    foreground: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame must be at least 1x1, got {self.width}x{self.height}")
        if not self.mean_radius > 0:
            raise ValueError(f"mean_radius must be > 0, got {self.mean_radius}")
        if self.disk_count_mean < 0:
            raise ValueError(f"disk_count_mean must be >= 0, got {self.disk_count_mean}")
        if not 0 < self.contrast <= 1:
            raise ValueError(f"contrast must lie in (0, 1], got {self.contrast}")
        if self.background < self.foreground:
            raise ValueError("background level below foreground level")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["radius_dist"] = self.radius_dist.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpeckleParams":
        d = dict(d)
        d["radius_dist"] = RadiusDistribution(d["radius_dist"])
        return cls(**d)


def star_speckle_params(width: int = 2000, height: int = 501) -> SpeckleParams:
    """Pattern settings used for the star target frames."""
    count = 556_667.0 * (width * height) / (2000 * 501)
    return SpeckleParams(
        width=width,
        height=height,
        radius_dist=RadiusDistribution.EXPONENTIAL,
        mean_radius=0.5,
        disk_count_mean=count,
        contrast=0.6,
    )


@dataclass(frozen=True)
class DiskSet:
    """Disk centers and radii, in pixel coordinates of one frame."""

    x: np.ndarray
    y: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        if not (x.shape == y.shape == r.shape) or x.ndim != 1:
            raise ValueError("x, y, r must be 1-D arrays of equal length")
        if x.size and not np.all(r > 0):
            raise ValueError("all radii must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "r", r)

    def __len__(self) -> int:
        return self.x.size

    def translated(self, dx: float, dy: float) -> "DiskSet":
        return DiskSet(self.x + dx, self.y + dy, self.r)


def sample_disks(params: SpeckleParams, seed: int) -> DiskSet:
    """Draw a DiskSet: Poisson count, then radii, then centers.

    Centers are uniform over the frame extended by 2 * mean_radius on each
    side so edge pixels see the same disk statistics as interior ones.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(params.disk_count_mean))
    if n == 0:
        empty = np.empty(0)
        return DiskSet(empty, empty, empty)

    if params.radius_dist is RadiusDistribution.UNIFORM:
        r = rng.uniform(0.0, 2.0 * params.mean_radius, n)
        # Exclude the measure-zero zero draw to keep the radius invariant.
        while np.any(r == 0):
            r[r == 0] = rng.uniform(0.0, 2.0 * params.mean_radius, int(np.sum(r == 0)))
    elif params.radius_dist is RadiusDistribution.EXPONENTIAL:
        r = rng.exponential(params.mean_radius, n)
        while np.any(r == 0):
            r[r == 0] = rng.exponential(params.mean_radius, int(np.sum(r == 0)))
    else:
        r = rng.poisson(params.mean_radius, n).astype(np.float64)
        while np.any(r == 0):
            r[r == 0] = rng.poisson(params.mean_radius, int(np.sum(r == 0)))

    m = 2.0 * params.mean_radius
    x = rng.uniform(-0.5 - m, params.width - 0.5 + m, n)
    y = rng.uniform(-0.5 - m, params.height - 0.5 + m, n)
    return DiskSet(x, y, r)


def disks_to_json(disks: DiskSet, params: SpeckleParams, seed: int | None, path: str | Path) -> None:
    """Persist a DiskSet with enough context to regenerate or audit it."""
    payload = {
        "seed": seed,
        "params": params.to_dict(),
        "disks": np.column_stack([disks.x, disks.y, disks.r]).tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def disks_from_json(path: str | Path) -> tuple[DiskSet, SpeckleParams, int | None]:
    payload = json.loads(Path(path).read_text())
    arr = np.asarray(payload["disks"], dtype=np.float64).reshape(-1, 3)
    disks = DiskSet(arr[:, 0], arr[:, 1], arr[:, 2])
    return disks, SpeckleParams.from_dict(payload["params"]), payload["seed"]


class DiskIndex:
    """Uniform-grid spatial index for point-vs-disk-union queries.

    Disks are binned into unit cells by bounding box (padded so distance
    queries see every disk within `pad` of a point); a query gathers the
    candidate disks of its cell and tests them against the exact geometry,
    so membership is never rasterized.
    """

    def __init__(self, disks: DiskSet, pad: float = 0.25):
        self._disks = disks
        self.pad = float(pad)
        if len(disks) == 0:
            self._nx = self._ny = 0
            return
        x, y, r = disks.x, disks.y, disks.r + self.pad
        self._x0 = float(np.floor((x - r).min()))
        self._y0 = float(np.floor((y - r).min()))
        self._nx = int(np.ceil((x + r).max() - self._x0)) + 1
        self._ny = int(np.ceil((y + r).max() - self._y0)) + 1

        ix0 = np.floor(x - r - self._x0).astype(np.int64)
        ix1 = np.floor(x + r - self._x0).astype(np.int64)
        iy0 = np.floor(y - r - self._y0).astype(np.int64)
        iy1 = np.floor(y + r - self._y0).astype(np.int64)
        cx = ix1 - ix0 + 1
        cy = iy1 - iy0 + 1
        counts = cx * cy
        total = int(counts.sum())

        disk_ids = np.repeat(np.arange(len(disks), dtype=np.int64), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        local = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
        cy_rep = np.repeat(cy, counts)
        cell_ix = np.repeat(ix0, counts) + local // cy_rep
        cell_iy = np.repeat(iy0, counts) + local % cy_rep
        cell_id = cell_iy * self._nx + cell_ix

        order = np.argsort(cell_id, kind="stable")
        self._entry_disk = disk_ids[order]
        cell_sorted = cell_id[order]
        n_cells = self._nx * self._ny
        self._cell_start = np.searchsorted(cell_sorted, np.arange(n_cells + 1))

    def _candidates(self, qx: np.ndarray, qy: np.ndarray):
        """(query indices with candidates, segment offsets, candidate disk ids)."""
        ix = np.floor(qx - self._x0).astype(np.int64)
        iy = np.floor(qy - self._y0).astype(np.int64)
        valid = (ix >= 0) & (ix < self._nx) & (iy >= 0) & (iy < self._ny)
        vidx = np.nonzero(valid)[0]
        if vidx.size == 0:
            return vidx, None, None
        cell = iy[vidx] * self._nx + ix[vidx]
        starts = self._cell_start[cell]
        counts = self._cell_start[cell + 1] - starts
        keep = counts > 0
        vidx, starts, counts = vidx[keep], starts[keep], counts[keep]
        if vidx.size == 0:
            return vidx, None, None
        offs = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(int(counts.sum()), dtype=np.int64) - np.repeat(offs, counts) + np.repeat(starts, counts)
        return vidx, offs, self._entry_disk[slot]

    def covered(self, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
        """Boolean mask: is each query point inside the disk union."""
        qx = np.asarray(qx, dtype=np.float64).ravel()
        qy = np.asarray(qy, dtype=np.float64).ravel()
        out = np.zeros(qx.size, dtype=bool)
        if self._nx == 0:
            return out
        vidx, offs, d = self._candidates(qx, qy)
        if vidx.size == 0:
            return out
        counts = np.diff(np.append(offs, d.size))
        q_rep = np.repeat(vidx, counts)
        dx = qx[q_rep] - self._disks.x[d]
        dy = qy[q_rep] - self._disks.y[d]
        hit = dx * dx + dy * dy <= self._disks.r[d] ** 2
        out[q_rep[hit]] = True
        return out

    def occupancy(self, qx: np.ndarray, qy: np.ndarray, ramp_width: float) -> np.ndarray:
        """Antialiased union occupancy in [0, 1] at each query point.

        Per disk, occupancy is a linear ramp of width `ramp_width` across
        the edge, with the edge pushed inward by w**2 / (24 r): the ramp
        alone overestimates the enclosed area by pi w**2 / 12 regardless
        of r, and the shift cancels that.  Per-disk values are combined
        with the complement-product rule, which is exact for interior
        points and for perpendicular edge crossings; the remaining error
        is second order in ramp_width.

        Candidates are only indexed within `pad` of each disk, so
        ramp_width / 2 must not exceed pad.
        """
        if ramp_width / 2.0 > self.pad:
            raise ValueError("ramp_width too wide for the index padding")
        qx = np.asarray(qx, dtype=np.float64).ravel()
        qy = np.asarray(qy, dtype=np.float64).ravel()
        out = np.zeros(qx.size)
        if self._nx == 0:
            return out
        vidx, offs, d = self._candidates(qx, qy)
        if vidx.size == 0:
            return out
        counts = np.diff(np.append(offs, d.size))
        q_rep = np.repeat(vidx, counts)
        dx = qx[q_rep] - self._disks.x[d]
        dy = qy[q_rep] - self._disks.y[d]
        r = self._disks.r[d]
        dist = np.sqrt(dx * dx + dy * dy) - r
        dist += ramp_width**2 / (24.0 * np.maximum(r, ramp_width))
        miss = 1.0 - np.clip(0.5 - dist / ramp_width, 0.0, 1.0)
        out[vidx] = 1.0 - np.multiply.reduceat(miss, offs)
        return out


def _sample_offsets(supersample: int) -> np.ndarray:
    """Stratified midpoint offsets inside one pixel, centered on 0."""
    return -0.5 + (np.arange(supersample) + 0.5) / supersample


def render_coverage(
    disks: DiskSet,
    width: int,
    height: int,
    supersample: int,
    inverse_map: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
    refine_levels: int = 2,
) -> np.ndarray:
    """Per-pixel covered-area fraction of the disk union.

    Every pixel is probed on a supersample x supersample stratified grid
    of edge-antialiased occupancy queries.  Probe cells cut by an edge
    (fractional occupancy) are split into four children at half spacing,
    down to `refine_levels` extra levels, so slivers and corners between
    overlapping disks are resolved well below one gray level without
    paying full resolution everywhere.

    When inverse_map is given, each probe position is first pulled back
    through it; a deformed rendering is therefore the same computation with
    a different probe set, which keeps the two paths bit-compatible.
    """
    if supersample < 4:
        raise ValueError(f"supersample must be >= 4, got {supersample}")
    index = DiskIndex(disks)
    offs = _sample_offsets(supersample)
    s2 = supersample * supersample
    coverage = np.empty((height, width), dtype=np.float64)

    def probe(px: np.ndarray, py: np.ndarray, ramp: float) -> np.ndarray:
        if inverse_map is not None:
            px, py = inverse_map(px, py)
        return index.occupancy(px, py, ramp_width=ramp)

    rows_per_tile = max(1, _MAX_SAMPLES_PER_TILE // max(1, width * s2))
    for y_start in range(0, height, rows_per_tile):
        y_stop = min(y_start + rows_per_tile, height)
        ys = np.arange(y_start, y_stop, dtype=np.float64)
        # Sample layout: (rows, sub_y, cols, sub_x), flattened C-order.
        qy = (ys[:, None, None, None] + offs[None, :, None, None]) + np.zeros((1, 1, width, supersample))
        qx = (np.arange(width, dtype=np.float64)[None, None, :, None] + offs[None, None, None, :]) + np.zeros(
            (ys.size, supersample, 1, 1)
        )
        qx = qx.ravel()
        qy = qy.ravel()
        pixel_of = (
            np.arange(ys.size * width, dtype=np.int64)
            .reshape(ys.size, 1, width, 1)
            .repeat(supersample, axis=1)
            .repeat(supersample, axis=3)
            .ravel()
        )
        npix = ys.size * width
        cov = np.zeros(npix)
        w_level = 1.0 / supersample
        weight = 1.0 / s2
        occ = probe(qx, qy, w_level)
        for _ in range(refine_levels):
            frac = (occ > 1e-12) & (occ < 1.0 - 1e-12)
            cov += np.bincount(pixel_of[~frac], weights=occ[~frac] * weight, minlength=npix)
            if not np.any(frac):
                occ = occ[:0]
                break
            qx, qy, pixel_of = qx[frac], qy[frac], pixel_of[frac]
            # Four children at quarter offsets of the parent cell.
            child = np.array([-0.25, 0.25]) * w_level
            qx = (qx[:, None, None] + child[None, :, None] + np.zeros((1, 1, 2))).ravel()
            qy = (qy[:, None, None] + np.zeros((1, 2, 1)) + child[None, None, :]).ravel()
            pixel_of = np.repeat(pixel_of, 4)
            w_level /= 2.0
            weight /= 4.0
            occ = probe(qx, qy, w_level)
        if occ.size:
            cov += np.bincount(pixel_of, weights=occ * weight, minlength=npix)
        coverage[y_start:y_stop] = cov.reshape(ys.size, width)
    return coverage


def render_speckle(disks: DiskSet, params: SpeckleParams, supersample: int = 8) -> GrayImage:
    """Render the pattern on the undeformed frame.

    Intensity is background - contrast * (background - foreground) * coverage,
    so values stay inside [mixed foreground, background] for any pattern.
    """
    cov = render_coverage(disks, params.width, params.height, supersample)
    span = params.contrast * (params.background - params.foreground)
    return GrayImage(params.background - span * cov)


@dataclass(frozen=True)
class ScreenThresholds:
    """Frozen acceptance thresholds for rendered reference frames.

    Tuned once on 256 x 256 renders over the dataset parameter ranges; see
    the test suite for the acceptance-rate check that froze them.
    """

    min_rms_contrast: float = 15.0
    flat_gradient: float = 1.0
    max_flat_fraction: float = 0.01


def screening_metrics(img: GrayImage, thresholds: ScreenThresholds) -> tuple[float, float]:
    """(RMS contrast, largest low-gradient blob fraction) of a frame."""
    v = img.values
    rms = float(v.std())
    gy, gx = np.gradient(v)
    flat = np.hypot(gx, gy) < thresholds.flat_gradient
    labels, n = ndimage.label(flat)
    if n == 0:
        blob = 0.0
    else:
        blob = float(np.bincount(labels.ravel())[1:].max()) / v.size
    return rms, blob


def screen_reference(img: GrayImage, thresholds: ScreenThresholds = ScreenThresholds()) -> bool:
    """Accept a reference frame for dataset use.

    Rejects low-contrast frames and frames with a large textureless blob;
    both starve subset matching of gradient information.
    """
    rms, blob = screening_metrics(img, thresholds)
    if rms < thresholds.min_rms_contrast:
        logger.debug("screen: RMS contrast %.2f below %.2f", rms, thresholds.min_rms_contrast)
        return False
    if blob > thresholds.max_flat_fraction:
        logger.debug("screen: flat blob fraction %.4f above %.4f", blob, thresholds.max_flat_fraction)
        return False
    return True
