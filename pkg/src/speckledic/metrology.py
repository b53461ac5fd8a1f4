"""Scoring of displacement estimates against ground truth.

Covers pointwise error metrics over a rectangular evaluation zone, the
star-target transfer curves (center-row profile and per-column error),
the derived resolution indicators d, sigma_u and their product alpha,
repeated-trial bias experiments, and strain maps obtained by Gaussian-
derivative filtering.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .fields import DisplacementField, StarSpec, star_field
from .images import GrayImage, save_png
from .seeding import derive_seed
from .speckle import SpeckleParams, render_speckle, sample_disks, star_speckle_params
from .warping import NoiseModel, add_noise, quantize, render_deformed_speckle

_TAG_PATTERN = 1
_TAG_NOISE_REF = 2
_TAG_NOISE_DEF = 3


@dataclass(frozen=True)
class EvaluationROI:
    """Rectangular zone over which scalar metrics are averaged."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"ROI origin must be non-negative, got ({self.x0}, {self.y0})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"ROI sides must be >= 1, got {self.width}x{self.height}")

    @property
    def rows(self) -> slice:
        return slice(self.y0, self.y0 + self.height)

    @property
    def cols(self) -> slice:
        return slice(self.x0, self.x0 + self.width)

    def check_within(self, shape: tuple[int, int]) -> None:
        if self.y0 + self.height > shape[0] or self.x0 + self.width > shape[1]:
            raise ValueError(
                f"ROI {self.width}x{self.height}+{self.x0}+{self.y0} exceeds field {shape[1]}x{shape[0]}"
            )


def star_eval_roi(star: StarSpec) -> EvaluationROI:
    """Default evaluation zone for star targets.

    Columns span 3% to 40% of the width: the left margin drops the zone
    where the fringe period is smaller than a large subset window (nothing
    tracks there, the error saturates at the folded-cosine mean), and the
    right edge caps the period where common window sizes resolve almost
    perfectly, so the average is not diluted by the easy low-frequency
    half.  Rows keep a 4% margin clear of the band where dense solvers
    extrapolate from the nearest computed point.
    """
    x0 = int(round(0.03 * star.width))
    x1 = int(round(0.40 * star.width))
    y0 = int(round(0.04 * star.height))
    y1 = star.height - y0
    return EvaluationROI(x0=x0, y0=y0, width=x1 - x0, height=y1 - y0)


def _check_pair(est: DisplacementField, gt: DisplacementField, roi: EvaluationROI | None):
    if est.u.shape != gt.u.shape:
        raise ValueError(f"field shapes differ: {est.u.shape} vs {gt.u.shape}")
    if roi is not None:
        roi.check_within(est.u.shape)


def aee(est: DisplacementField, gt: DisplacementField, roi: EvaluationROI | None = None) -> float:
    """Mean Euclidean error over the zone (both components)."""
    _check_pair(est, gt, roi)
    du = est.u - gt.u
    dv = est.v - gt.v
    if roi is not None:
        du = du[roi.rows, roi.cols]
        dv = dv[roi.rows, roi.cols]
    return float(np.mean(np.sqrt(du * du + dv * dv)))


def mae_v(est: DisplacementField, gt: DisplacementField, roi: EvaluationROI | None = None) -> float:
    """Mean absolute error of the vertical component over the zone."""
    _check_pair(est, gt, roi)
    dv = est.v - gt.v
    if roi is not None:
        dv = dv[roi.rows, roi.cols]
    return float(np.mean(np.abs(dv)))


def attenuation_and_columns(
    est: DisplacementField,
    star: StarSpec,
    roi: EvaluationROI | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Center-row profile and per-column vertical MAE of a star estimate.

    The profile samples the estimated v along the center row, where the
    ground truth equals the amplitude everywhere, so attenuation reads
    directly.  The per-column curve averages |v_est - v_gt| over the ROI
    rows (default: the standard evaluation zone) for every column.
    """
    if est.u.shape != (star.height, star.width):
        raise ValueError(
            f"field {est.u.shape} does not match star frame {(star.height, star.width)}"
        )
    if roi is None:
        roi = star_eval_roi(star)
    gt = star_field(star)
    profile = est.v[int(round(star.center_row))].copy()
    err = np.abs(est.v - gt.v)[roi.rows]
    per_column = err.mean(axis=0)
    return profile, per_column


def relative_bias(profile: np.ndarray, star: StarSpec) -> np.ndarray:
    """|profile/A - 1| per column; zero for a perfect estimator."""
    return np.abs(profile / star.amplitude - 1.0)


class ResolutionOutOfRange(RuntimeError):
    """Raised when the bias curve never drops under the threshold."""

    def __init__(self, message: str, curve: np.ndarray):
        super().__init__(message)
        self.curve = curve


def spatial_resolution(
    bias: np.ndarray,
    star: StarSpec,
    threshold: float = 0.10,
    smooth_width: int = 30,
) -> float:
    """Smallest resolved period: where smoothed relative bias falls to the threshold.

    The per-column bias curve is smoothed with a centered moving average
    of smooth_width columns, scanned from the high-frequency end, and the
    first crossing of the threshold is located by linear interpolation
    between the bracketing columns, then mapped to a period through the
    star's frequency ramp.
    """
    if bias.ndim != 1 or bias.size != star.width:
        raise ValueError(f"bias curve must have {star.width} columns, got {bias.shape}")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if smooth_width < 1:
        raise ValueError(f"smooth_width must be >= 1, got {smooth_width}")
    smoothed = ndimage.uniform_filter1d(np.asarray(bias, dtype=np.float64), smooth_width, mode="nearest")
    below = smoothed <= threshold
    if below[0]:
        return star.period_min
    if not np.any(below):
        raise ResolutionOutOfRange(
            f"smoothed bias stays above {threshold:.3f} everywhere (min {smoothed.min():.4f})",
            smoothed,
        )
    j = int(np.argmax(below))
    b0, b1 = smoothed[j - 1], smoothed[j]
    frac = (b0 - threshold) / (b0 - b1) if b0 != b1 else 1.0
    return float(star.period_at(j - 1 + frac))


def displacement_resolution(
    noisy_est: DisplacementField,
    clean_est: DisplacementField,
    roi: EvaluationROI | None = None,
) -> float:
    """Standard deviation of the vertical difference between two estimates."""
    _check_pair(noisy_est, clean_est, roi)
    dv = noisy_est.v - clean_est.v
    if roi is not None:
        dv = dv[roi.rows, roi.cols]
    return float(np.std(dv))


def alpha_indicator(d: float, sigma_u: float) -> float:
    """Product of spatial and displacement resolution."""
    return d * sigma_u


@dataclass(frozen=True)
class MetrologyReport:
    """Bundle of scalar metrics and curves for one estimator run."""

    aee: float
    mae: float
    attenuation_profile: np.ndarray
    per_column_mae: np.ndarray
    d: float
    sigma_u: float

    def __post_init__(self):
        scalars = (self.aee, self.mae, self.d, self.sigma_u)
        if not all(math.isfinite(s) for s in scalars):
            raise ValueError(f"non-finite metric in report: {scalars}")
        if not self.d > 0:
            raise ValueError(f"spatial resolution must be > 0, got {self.d}")
        if self.sigma_u < 0:
            raise ValueError(f"displacement resolution must be >= 0, got {self.sigma_u}")

    @property
    def alpha(self) -> float:
        return self.d * self.sigma_u

    def to_dict(self) -> dict:
        return {
            "aee": self.aee,
            "mae": self.mae,
            "d": self.d,
            "sigma_u": self.sigma_u,
            "alpha": self.alpha,
            "attenuation_profile": [float(x) for x in self.attenuation_profile],
            "per_column_mae": [float(x) for x in self.per_column_mae],
        }


def metrology_report(
    clean_est: DisplacementField,
    noisy_est: DisplacementField,
    star: StarSpec,
    roi: EvaluationROI | None = None,
    threshold: float = 0.10,
    smooth_width: int = 30,
) -> MetrologyReport:
    """Full star-target report from a noiseless and a noisy-input estimate.

    d comes from the noiseless attenuation profile, sigma_u from the
    spread between the two estimates; scalar errors score the noiseless
    run against the analytic ground truth.
    """
    if roi is None:
        roi = star_eval_roi(star)
    gt = star_field(star)
    profile, per_column = attenuation_and_columns(clean_est, star, roi)
    d = spatial_resolution(relative_bias(profile, star), star, threshold, smooth_width)
    sigma_u = displacement_resolution(noisy_est, clean_est, roi)
    return MetrologyReport(
        aee=aee(clean_est, gt, roi),
        mae=mae_v(clean_est, gt, roi),
        attenuation_profile=profile,
        per_column_mae=per_column,
        d=d,
        sigma_u=sigma_u,
    )


def write_report_json(report: MetrologyReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def write_curves_csv(
    path: str | Path,
    star: StarSpec,
    profile: np.ndarray,
    per_column_mae: np.ndarray,
) -> None:
    """Per-column curves with the period axis alongside, for plotting."""
    bias = relative_bias(profile, star)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["column", "period", "profile", "bias", "mae"])
        for x in range(star.width):
            w.writerow(
                [x, f"{star.period_at(x):.4f}", f"{profile[x]:.6f}", f"{bias[x]:.6f}", f"{per_column_mae[x]:.6f}"]
            )


# Color stops for error maps: black, blue, cyan, yellow, red at equal
# spacing; values map linearly onto [0, vmax] and saturate above.
_MAP_STOPS = np.array(
    [[0, 0, 0], [0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]],
    dtype=np.float64,
)


def error_map_png(
    est: DisplacementField,
    gt: DisplacementField,
    path: str | Path,
    vmax: float = 0.5,
) -> None:
    """Heat map of |v_est - v_gt| with a fixed linear scale 0..vmax."""
    _check_pair(est, gt, None)
    if not vmax > 0:
        raise ValueError(f"vmax must be > 0, got {vmax}")
    err = np.abs(est.v - gt.v)
    t = np.clip(err / vmax, 0.0, 1.0) * (len(_MAP_STOPS) - 1)
    lo = np.minimum(t.astype(np.int64), len(_MAP_STOPS) - 2)
    frac = (t - lo)[..., None]
    rgb = _MAP_STOPS[lo] * (1 - frac) + _MAP_STOPS[lo + 1] * frac
    from PIL import Image

    Image.fromarray(np.round(rgb).astype(np.uint8), mode="RGB").save(Path(path))


class PibMode(Enum):
    FIXED_PATTERN = "fixed"
    VARIED_PATTERN = "varied"


@dataclass(frozen=True)
class PibResult:
    """Profiles from repeated star trials.

    profiles holds one center-row curve per successful trial, in trial
    order; failed trial indices are reported, not silently dropped.
    """

    mode: PibMode
    mean_profile: np.ndarray
    profiles: np.ndarray
    failed: tuple[int, ...]

    @property
    def n_ok(self) -> int:
        return self.profiles.shape[0]


def _pib_trial(args):
    (mode, star, speckle, noise, estimator, seed, trial) = args
    if mode is PibMode.FIXED_PATTERN:
        pattern_seed = derive_seed(seed, _TAG_PATTERN, 0)
    else:
        pattern_seed = derive_seed(seed, _TAG_PATTERN, trial)
    disks = sample_disks(speckle, pattern_seed)
    ref = render_speckle(disks, speckle)
    dfm = render_deformed_speckle(disks, star_field(star), speckle)
    if noise is not None:
        ref = add_noise(ref, noise, derive_seed(seed, _TAG_NOISE_REF, trial))
        dfm = add_noise(dfm, noise, derive_seed(seed, _TAG_NOISE_DEF, trial))
    ref = quantize(ref)
    dfm = quantize(dfm)
    est = estimator(ref, dfm)
    if est.u.shape != (star.height, star.width):
        raise ValueError(f"estimator returned {est.u.shape} for a {star.height}x{star.width} frame")
    return est.v[int(round(star.center_row))].copy()


def pib_experiment(
    mode: PibMode,
    star: StarSpec,
    estimator: Callable[[GrayImage, GrayImage], DisplacementField],
    n: int = 50,
    noise: NoiseModel | None = None,
    speckle: SpeckleParams | None = None,
    seed: int = 0,
    workers: int = 1,
) -> PibResult:
    """Repeated star measurements isolating pattern-induced bias.

    FIXED_PATTERN renders one speckle pair and draws n independent noise
    realizations, so averaging keeps any bias tied to that particular
    pattern.  VARIED_PATTERN renders n independent patterns (one noise
    draw each), so pattern-specific bias averages out.  Trials carry
    derived seeds and are order-independent; a failing estimator marks
    its trial as failed and the rest proceed.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if speckle is None:
        speckle = star_speckle_params(star.width, star.height)
    if (speckle.width, speckle.height) != (star.width, star.height):
        raise ValueError("speckle frame must match the star frame")

    jobs = [(mode, star, speckle, noise, estimator, seed, t) for t in range(n)]
    results: list[np.ndarray | None] = [None] * n
    failed: list[int] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = list(map(pool.submit, [_pib_trial] * n, jobs))
            for t, fut in enumerate(futures):
                try:
                    results[t] = fut.result()
                except Exception:
                    failed.append(t)
    else:
        for t, job in enumerate(jobs):
            try:
                results[t] = _pib_trial(job)
            except Exception:
                failed.append(t)

    ok = [r for r in results if r is not None]
    if not ok:
        raise RuntimeError(f"all {n} trials failed")
    profiles = np.stack(ok, axis=0)
    return PibResult(
        mode=mode,
        mean_profile=profiles.mean(axis=0),
        profiles=profiles,
        failed=tuple(failed),
    )


def ripple_rms(profile: np.ndarray, smooth_width: int = 31) -> float:
    """RMS of the profile about its own moving average.

    Measures the high-frequency wiggle riding on the attenuation trend;
    the half-window at each end is excluded so edge handling does not
    contribute.
    """
    if smooth_width < 3:
        raise ValueError(f"smooth_width must be >= 3, got {smooth_width}")
    if profile.size < 3 * smooth_width:
        raise ValueError(f"profile too short ({profile.size}) for smooth_width {smooth_width}")
    trend = ndimage.uniform_filter1d(np.asarray(profile, dtype=np.float64), smooth_width, mode="nearest")
    resid = (profile - trend)[smooth_width // 2 : profile.size - smooth_width // 2]
    return float(np.sqrt(np.mean(resid * resid)))


def _gauss_deriv_kernels(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Smoothing and derivative kernels; the derivative kernel returns an
    exact slope on affine inputs, the smoothing kernel sums to one."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    smooth = g / g.sum()
    deriv = x * g / np.sum(x * x * g)
    return smooth, deriv


def strain(field: DisplacementField, component: str, sigma: float = 6.0) -> np.ndarray:
    """Strain map by Gaussian-derivative filtering of the displacement.

    One separable pass both smooths and differentiates.  Components:
    exx = du/dx, eyy = dv/dy, exy = (du/dy + dv/dx)/2.  Borders use
    reflection, so values within 4*sigma of an edge are approximate.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    smooth, deriv = _gauss_deriv_kernels(sigma)

    def dx(arr):
        out = ndimage.correlate1d(arr, deriv, axis=1, mode="reflect")
        return ndimage.correlate1d(out, smooth, axis=0, mode="reflect")

    def dy(arr):
        out = ndimage.correlate1d(arr, deriv, axis=0, mode="reflect")
        return ndimage.correlate1d(out, smooth, axis=1, mode="reflect")

    if component == "exx":
        return dx(field.u)
    if component == "eyy":
        return dy(field.v)
    if component == "exy":
        return 0.5 * (dy(field.u) + dx(field.v))
    raise ValueError(f"component must be exx, eyy or exy, got {component!r}")
