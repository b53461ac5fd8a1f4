"""Subset matching by inverse-compositional Gauss-Newton on ZNSSD.

The deformed frame is interpolated with a cubic B-spline whose
coefficients are computed once per image; reference subsets, their
gradients, steepest-descent images and Hessians are also precomputed, so
each iteration only re-samples the deformed frame and solves one small
linear system per subset.  Subsets are processed a full row at a time:
all points of a row iterate together as one batch, seeded from the row
above, which keeps the Python overhead per point negligible.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage, signal

from .fields import DisplacementField
from .images import GrayImage

logger = logging.getLogger(__name__)

# Samples may poke this far beyond the frame before a subset is failed;
# the spline pad extrapolates by edge replication within the slack.
_OOB_SLACK = 2.0
_SPLINE_PAD = 4


class SubsetCode(IntEnum):
    CONVERGED = 0
    MAX_ITERS = 1
    OUT_OF_BOUNDS = 2
    FLAT_REFERENCE = 3
    FLAT_TARGET = 4
    SINGULAR = 5
    DIVERGED = 6


@dataclass(frozen=True)
class DicConfig:
    """Matching settings.

    half_size M gives a (2M+1) x (2M+1) subset.  conv_tol applies to the
    update norm expressed in pixels at the subset corner, so gradient
    terms are scaled by M before comparing.
    """

    half_size: int = 5
    order: int = 1
    step: int = 1
    max_iters: int = 50
    conv_tol: float = 1e-4

    def __post_init__(self):
        if self.half_size < 3:
            raise ValueError(f"half_size must be >= 3, got {self.half_size}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if not self.conv_tol > 0:
            raise ValueError(f"conv_tol must be > 0, got {self.conv_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    @property
    def n_params(self) -> int:
        return 6 if self.order == 1 else 12


@dataclass(frozen=True)
class SubsetResult:
    """Converged state of one subset."""

    u: float
    v: float
    params: np.ndarray
    znssd: float
    iterations: int
    converged: bool
    code: SubsetCode

    @property
    def zncc(self) -> float:
        return 1.0 - 0.5 * self.znssd


def _bspline_weights(t: np.ndarray):
    """Cubic B-spline weights for taps at floor(x) + (-1, 0, 1, 2)."""
    s = t
    s2 = s * s
    s3 = s2 * s
    w0 = (1.0 - 3.0 * s + 3.0 * s2 - s3) / 6.0
    w1 = 2.0 / 3.0 - s2 + 0.5 * s3
    w2 = 2.0 / 3.0 - (1 - s) ** 2 + 0.5 * (1 - s) ** 3
    w3 = s3 / 6.0
    return w0, w1, w2, w3


def _bspline_dweights(t: np.ndarray):
    s = t
    s2 = s * s
    d0 = -0.5 * (1.0 - s) ** 2
    d1 = 1.5 * s2 - 2.0 * s
    d2 = 2.0 * (1 - s) - 1.5 * (1 - s) ** 2
    d3 = 0.5 * s2
    return d0, d1, d2, d3


class SplineImage:
    """Cubic B-spline interpolant with precomputed coefficients."""

    def __init__(self, values: np.ndarray):
        self.height, self.width = values.shape
        padded = np.pad(values, _SPLINE_PAD, mode="edge")
        self._c = ndimage.spline_filter(padded, order=3, mode="mirror", output=np.float64)
        self._flat = self._c.ravel()
        self._stride = self._c.shape[1]

    def sample(self, qx: np.ndarray, qy: np.ndarray, grad: bool = False):
        """Values (and optionally gradients) at fractional positions.

        Positions must stay within the padded domain; callers enforce the
        out-of-bounds policy before sampling.
        """
        px = qx + _SPLINE_PAD
        py = qy + _SPLINE_PAD
        x0 = np.floor(px).astype(np.int64)
        y0 = np.floor(py).astype(np.int64)
        tx = px - x0
        ty = py - y0
        wx = _bspline_weights(tx)
        wy = _bspline_weights(ty)
        base = (y0 - 1) * self._stride + (x0 - 1)

        rows = []
        for n in range(4):
            row = wx[0] * self._flat[base + n * self._stride]
            for m in range(1, 4):
                row += wx[m] * self._flat[base + n * self._stride + m]
            rows.append(row)
        val = wy[0] * rows[0] + wy[1] * rows[1] + wy[2] * rows[2] + wy[3] * rows[3]
        if not grad:
            return val

        dx = _bspline_dweights(tx)
        dy = _bspline_dweights(ty)
        gx = np.zeros_like(val)
        gy = np.zeros_like(val)
        for n in range(4):
            rowv = np.zeros_like(val)
            rowd = np.zeros_like(val)
            for m in range(4):
                tap = self._flat[base + n * self._stride + m]
                rowv += wx[m] * tap
                rowd += dx[m] * tap
            gx += wy[n] * rowd
            gy += dy[n] * rowv
        return val, gx, gy

    def grid_gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Interpolant derivatives at every integer pixel of the frame."""
        core = self._c[
            _SPLINE_PAD - 1 : _SPLINE_PAD + self.height + 1,
            _SPLINE_PAD - 1 : _SPLINE_PAD + self.width + 1,
        ]
        gx = 0.5 * (core[1:-1, 2:] - core[1:-1, :-2])
        gy = 0.5 * (core[2:, 1:-1] - core[:-2, 1:-1])
        return gx, gy


def _warp_matrices_o1(p: np.ndarray) -> np.ndarray:
    """(N, 6) params (u, ux, uy, v, vx, vy) -> (N, 3, 3) affine warps."""
    n = p.shape[0]
    m = np.zeros((n, 3, 3))
    m[:, 0, 0] = 1.0 + p[:, 1]
    m[:, 0, 1] = p[:, 2]
    m[:, 0, 2] = p[:, 0]
    m[:, 1, 0] = p[:, 4]
    m[:, 1, 1] = 1.0 + p[:, 5]
    m[:, 1, 2] = p[:, 3]
    m[:, 2, 2] = 1.0
    return m


def _params_o1(m: np.ndarray) -> np.ndarray:
    p = np.empty((m.shape[0], 6))
    p[:, 0] = m[:, 0, 2]
    p[:, 1] = m[:, 0, 0] - 1.0
    p[:, 2] = m[:, 0, 1]
    p[:, 3] = m[:, 1, 2]
    p[:, 4] = m[:, 1, 0]
    p[:, 5] = m[:, 1, 1] - 1.0
    return p


def _warp_matrices_o2(p: np.ndarray) -> np.ndarray:
    """(N, 12) params -> (N, 6, 6) quadratic warps.

    Parameter order: (u, ux, uy, uxx, uxy, uyy, v, vx, vy, vxx, vxy, vyy).
    The matrix acts on (x^2, xy, y^2, x, y, 1); products beyond quadratic
    are truncated, which makes composition a plain matrix product.
    """
    a0, a1, a2 = p[:, 0], 1.0 + p[:, 1], p[:, 2]
    a3, a4, a5 = 0.5 * p[:, 3], p[:, 4], 0.5 * p[:, 5]
    b0, b1, b2 = p[:, 6], p[:, 7], 1.0 + p[:, 8]
    b3, b4, b5 = 0.5 * p[:, 9], p[:, 10], 0.5 * p[:, 11]
    n = p.shape[0]
    m = np.zeros((n, 6, 6))
    m[:, 0] = np.stack(
        [a1 * a1 + 2 * a0 * a3, 2 * a1 * a2 + 2 * a0 * a4, a2 * a2 + 2 * a0 * a5, 2 * a0 * a1, 2 * a0 * a2, a0 * a0],
        axis=1,
    )
    m[:, 1] = np.stack(
        [
            a1 * b1 + a0 * b3 + a3 * b0,
            a1 * b2 + a2 * b1 + a0 * b4 + a4 * b0,
            a2 * b2 + a0 * b5 + a5 * b0,
            a0 * b1 + a1 * b0,
            a0 * b2 + a2 * b0,
            a0 * b0,
        ],
        axis=1,
    )
    m[:, 2] = np.stack(
        [b1 * b1 + 2 * b0 * b3, 2 * b1 * b2 + 2 * b0 * b4, b2 * b2 + 2 * b0 * b5, 2 * b0 * b1, 2 * b0 * b2, b0 * b0],
        axis=1,
    )
    m[:, 3] = np.stack([a3, a4, a5, a1, a2, a0], axis=1)
    m[:, 4] = np.stack([b3, b4, b5, b1, b2, b0], axis=1)
    m[:, 5, 5] = 1.0
    return m


def _params_o2(m: np.ndarray) -> np.ndarray:
    p = np.empty((m.shape[0], 12))
    p[:, 0] = m[:, 3, 5]
    p[:, 1] = m[:, 3, 3] - 1.0
    p[:, 2] = m[:, 3, 4]
    p[:, 3] = 2.0 * m[:, 3, 0]
    p[:, 4] = m[:, 3, 1]
    p[:, 5] = 2.0 * m[:, 3, 2]
    p[:, 6] = m[:, 4, 5]
    p[:, 7] = m[:, 4, 3]
    p[:, 8] = m[:, 4, 4] - 1.0
    p[:, 9] = 2.0 * m[:, 4, 0]
    p[:, 10] = m[:, 4, 1]
    p[:, 11] = 2.0 * m[:, 4, 2]
    return p


class SubsetSolver:
    """Shared state for matching many subsets of one image pair."""

    def __init__(self, ref: GrayImage, deformed: GrayImage, cfg: DicConfig):
        if ref.values.shape != deformed.values.shape:
            raise ValueError("reference and deformed frames must share a shape")
        side = 2 * cfg.half_size + 1
        if side > min(ref.width, ref.height):
            raise ValueError(
                f"subset side {side} exceeds frame {ref.width}x{ref.height}"
            )
        self.cfg = cfg
        self.ref = ref.values
        self.height, self.width = self.ref.shape
        self._def_spline = SplineImage(deformed.values)
        self._gx, self._gy = SplineImage(ref.values).grid_gradients()

        m = cfg.half_size
        oy, ox = np.mgrid[-m : m + 1, -m : m + 1]
        self._ox = ox.ravel().astype(np.float64)
        self._oy = oy.ravel().astype(np.float64)
        # Quadratic coordinate rows (x^2, xy, y^2, x, y, 1) reused per subset.
        self._quad = np.stack(
            [self._ox**2, self._ox * self._oy, self._oy**2, self._ox, self._oy, np.ones_like(self._ox)],
            axis=1,
        )
        scale = np.array([1.0, m, m, 1.0, m, m]) if cfg.order == 1 else np.array(
            [1.0, m, m, 0.5 * m * m, m * m, 0.5 * m * m] * 2
        )
        self._tol_scale = scale

    def _prepare(self, cx: np.ndarray, cy: np.ndarray):
        """Reference-side precomputation for a batch of subset centers."""
        n = cx.size
        ix = cx[:, None].astype(np.int64) + self._ox[None, :].astype(np.int64)
        iy = cy[:, None].astype(np.int64) + self._oy[None, :].astype(np.int64)
        f = self.ref[iy, ix]
        fx = self._gx[iy, ix]
        fy = self._gy[iy, ix]
        fm = f.mean(axis=1, keepdims=True)
        ft = f - fm
        fnorm = np.sqrt((ft * ft).sum(axis=1))

        if self.cfg.order == 1:
            jac = np.empty((n, f.shape[1], 6))
            jac[:, :, 0] = fx
            jac[:, :, 1] = fx * self._ox
            jac[:, :, 2] = fx * self._oy
            jac[:, :, 3] = fy
            jac[:, :, 4] = fy * self._ox
            jac[:, :, 5] = fy * self._oy
        else:
            jac = np.empty((n, f.shape[1], 12))
            jac[:, :, 0] = fx
            jac[:, :, 1] = fx * self._ox
            jac[:, :, 2] = fx * self._oy
            jac[:, :, 3] = fx * 0.5 * self._ox**2
            jac[:, :, 4] = fx * self._ox * self._oy
            jac[:, :, 5] = fx * 0.5 * self._oy**2
            jac[:, :, 6] = fy
            jac[:, :, 7] = fy * self._ox
            jac[:, :, 8] = fy * self._oy
            jac[:, :, 9] = fy * 0.5 * self._ox**2
            jac[:, :, 10] = fy * self._ox * self._oy
            jac[:, :, 11] = fy * 0.5 * self._oy**2

        hess = np.einsum("nsp,nsq->npq", jac, jac, optimize=True)
        flat_ref = fnorm < 1e-10
        singular = np.zeros(n, dtype=bool)
        hinv = np.empty_like(hess)
        ok = ~flat_ref
        if np.any(ok):
            try:
                hinv[ok] = np.linalg.inv(hess[ok])
            except np.linalg.LinAlgError:
                for i in np.nonzero(ok)[0]:
                    try:
                        hinv[i] = np.linalg.inv(hess[i])
                    except np.linalg.LinAlgError:
                        singular[i] = True
        return ft, fnorm, jac, hinv, flat_ref, singular

    def _warped_offsets(self, warps: np.ndarray):
        if self.cfg.order == 1:
            wx = warps[:, 0, 0, None] * self._ox + warps[:, 0, 1, None] * self._oy + warps[:, 0, 2, None]
            wy = warps[:, 1, 0, None] * self._ox + warps[:, 1, 1, None] * self._oy + warps[:, 1, 2, None]
        else:
            wx = warps[:, 3, :] @ self._quad.T
            wy = warps[:, 4, :] @ self._quad.T
        return wx, wy

    def solve_batch(
        self,
        cx: np.ndarray,
        cy: np.ndarray,
        init_u: np.ndarray,
        init_v: np.ndarray,
    ):
        """Match a batch of subsets; returns per-subset solution arrays.

        Output dict keys: u, v, params, znssd, iterations, code.
        """
        cfg = self.cfg
        n = cx.size
        n_par = cfg.n_params
        ft, fnorm, jac, hinv, flat_ref, singular = self._prepare(cx, cy)

        params = np.zeros((n, n_par))
        u_slot, v_slot = (0, 3) if cfg.order == 1 else (0, 6)
        params[:, u_slot] = init_u
        params[:, v_slot] = init_v
        to_mat = _warp_matrices_o1 if cfg.order == 1 else _warp_matrices_o2
        to_par = _params_o1 if cfg.order == 1 else _params_o2
        warps = to_mat(params)

        code = np.full(n, SubsetCode.MAX_ITERS, dtype=np.int64)
        code[flat_ref] = SubsetCode.FLAT_REFERENCE
        code[singular] = SubsetCode.SINGULAR
        iters = np.zeros(n, dtype=np.int64)
        znssd = np.full(n, 4.0)
        active = ~(flat_ref | singular)

        for _ in range(cfg.max_iters):
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            wx, wy = self._warped_offsets(warps[idx])
            sx = cx[idx, None] + wx
            sy = cy[idx, None] + wy

            oob = (
                (sx.min(axis=1) < -_OOB_SLACK)
                | (sx.max(axis=1) > self.width - 1 + _OOB_SLACK)
                | (sy.min(axis=1) < -_OOB_SLACK)
                | (sy.max(axis=1) > self.height - 1 + _OOB_SLACK)
                | ~np.isfinite(sx).all(axis=1)
                | ~np.isfinite(sy).all(axis=1)
            )
            if np.any(oob):
                code[idx[oob]] = SubsetCode.OUT_OF_BOUNDS
                active[idx[oob]] = False
                keep = ~oob
                idx, sx, sy = idx[keep], sx[keep], sy[keep]
                if idx.size == 0:
                    continue

            g = self._def_spline.sample(
                np.clip(sx, -_OOB_SLACK, self.width - 1 + _OOB_SLACK),
                np.clip(sy, -_OOB_SLACK, self.height - 1 + _OOB_SLACK),
            )
            gt = g - g.mean(axis=1, keepdims=True)
            gnorm = np.sqrt((gt * gt).sum(axis=1))
            flat = gnorm < 1e-10
            if np.any(flat):
                code[idx[flat]] = SubsetCode.FLAT_TARGET
                active[idx[flat]] = False
                keep = ~flat
                idx, gt, gnorm = idx[keep], gt[keep], gnorm[keep]
                if idx.size == 0:
                    continue

            resid = ft[idx] - (fnorm[idx] / gnorm)[:, None] * gt
            b = np.einsum("nsp,ns->np", jac[idx], resid, optimize=True)
            dp = -np.einsum("npq,nq->np", hinv[idx], b, optimize=True)

            norm = np.sqrt(((dp * self._tol_scale) ** 2).sum(axis=1))
            iters[idx] += 1

            diverged = ~np.isfinite(norm) | (norm > cfg.half_size)
            if np.any(diverged):
                code[idx[diverged]] = SubsetCode.DIVERGED
                active[idx[diverged]] = False
                keep = ~diverged
                idx, dp, norm = idx[keep], dp[keep], norm[keep]
                if idx.size == 0:
                    continue

            delta = to_mat(dp)
            warps[idx] = warps[idx] @ np.linalg.inv(delta)

            done = norm <= cfg.conv_tol
            if np.any(done):
                di = idx[done]
                code[di] = SubsetCode.CONVERGED
                active[di] = False

        params = to_par(warps)
        # Final correlation score for everything that got at least one step.
        scored = code != SubsetCode.FLAT_REFERENCE
        if np.any(scored):
            idx = np.nonzero(scored)[0]
            wx, wy = self._warped_offsets(warps[idx])
            sx = np.clip(cx[idx, None] + wx, -_OOB_SLACK, self.width - 1 + _OOB_SLACK)
            sy = np.clip(cy[idx, None] + wy, -_OOB_SLACK, self.height - 1 + _OOB_SLACK)
            g = self._def_spline.sample(sx, sy)
            gt = g - g.mean(axis=1, keepdims=True)
            gnorm = np.maximum(np.sqrt((gt * gt).sum(axis=1)), 1e-300)
            fn = np.maximum(fnorm[idx], 1e-300)
            diff = ft[idx] / fn[:, None] - gt / gnorm[:, None]
            znssd[idx] = (diff * diff).sum(axis=1)

        return {
            "u": params[:, u_slot],
            "v": params[:, v_slot],
            "params": params,
            "znssd": znssd,
            "iterations": iters,
            "code": code,
        }


def icgn_subset(
    ref: GrayImage,
    deformed: GrayImage,
    center: tuple[int, int],
    init: tuple[float, float],
    cfg: DicConfig,
) -> SubsetResult:
    """Match a single subset centered at (x, y) with initial guess (u, v)."""
    x, y = center
    m = cfg.half_size
    if not (m <= x <= ref.width - 1 - m and m <= y <= ref.height - 1 - m):
        raise ValueError(f"center {center} leaves no room for a half-size {m} subset")
    solver = SubsetSolver(ref, deformed, cfg)
    out = solver.solve_batch(
        np.array([x], dtype=np.float64),
        np.array([y], dtype=np.float64),
        np.array([float(init[0])]),
        np.array([float(init[1])]),
    )
    code = SubsetCode(int(out["code"][0]))
    return SubsetResult(
        u=float(out["u"][0]),
        v=float(out["v"][0]),
        params=out["params"][0],
        znssd=float(out["znssd"][0]),
        iterations=int(out["iterations"][0]),
        converged=code == SubsetCode.CONVERGED,
        code=code,
    )


@dataclass
class DicResult:
    """Dense matching output.

    field covers the full frame: values are native at converged points,
    nearest-converged fills elsewhere, edge-replicated in the margin of
    width half_size where no subset fits.
    """

    field: DisplacementField
    poi_x: np.ndarray
    poi_y: np.ndarray
    grid_u: np.ndarray
    grid_v: np.ndarray
    converged: np.ndarray
    code: np.ndarray
    iterations: np.ndarray
    znssd: np.ndarray
    native: np.ndarray
    n_points: int
    elapsed_s: float
    warning: str | None = None

    @property
    def points_per_second(self) -> float:
        if self.elapsed_s <= 0:
            raise ValueError("elapsed time is zero; throughput undefined")
        return self.n_points / self.elapsed_s


def _fill_from_converged(grid: np.ndarray, converged: np.ndarray) -> np.ndarray:
    """Replace non-converged entries by the nearest converged value."""
    if np.all(converged):
        return grid
    if not np.any(converged):
        return np.zeros_like(grid)
    idx = ndimage.distance_transform_edt(~converged, return_distances=False, return_indices=True)
    return grid[tuple(idx)]


def _lattice_to_frame(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray, width: int, height: int) -> np.ndarray:
    """Linear interpolation from the point lattice out to the full frame.

    Pixels beyond the lattice extent hold the edge value.
    """
    px = np.arange(width, dtype=np.float64)
    py = np.arange(height, dtype=np.float64)
    tx = np.clip((px - xs[0]) / (xs[1] - xs[0]) if xs.size > 1 else px * 0.0, 0, xs.size - 1)
    ty = np.clip((py - ys[0]) / (ys[1] - ys[0]) if ys.size > 1 else py * 0.0, 0, ys.size - 1)
    x0 = np.minimum(np.floor(tx).astype(np.int64), max(xs.size - 2, 0))
    y0 = np.minimum(np.floor(ty).astype(np.int64), max(ys.size - 2, 0))
    fx = tx - x0
    fy = ty - y0
    x1 = np.minimum(x0 + 1, xs.size - 1)
    y1 = np.minimum(y0 + 1, ys.size - 1)
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x1] * fx
    bot = grid[y1][:, x0] * (1 - fx) + grid[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def dic_dense(ref: GrayImage, deformed: GrayImage, cfg: DicConfig) -> DicResult:
    """Match every subset center on the step lattice, row by row.

    Each row is seeded from the converged results of the previous row
    (nearest converged column when a direct neighbor failed), the first
    row from zero; displacements in scope are subpixel so the seed only
    buys iterations, not correctness.
    """
    t0 = time.perf_counter()
    solver = SubsetSolver(ref, deformed, cfg)
    m = cfg.half_size
    xs = np.arange(m, ref.width - m, cfg.step, dtype=np.int64)
    ys = np.arange(m, ref.height - m, cfg.step, dtype=np.int64)
    nx, ny = xs.size, ys.size

    grid_u = np.zeros((ny, nx))
    grid_v = np.zeros((ny, nx))
    grid_code = np.zeros((ny, nx), dtype=np.int64)
    grid_iter = np.zeros((ny, nx), dtype=np.int64)
    grid_znssd = np.zeros((ny, nx))

    seed_u = np.zeros(nx)
    seed_v = np.zeros(nx)
    cx = xs.astype(np.float64)
    for j, y in enumerate(ys):
        out = solver.solve_batch(cx, np.full(nx, float(y)), seed_u, seed_v)
        grid_u[j] = out["u"]
        grid_v[j] = out["v"]
        grid_code[j] = out["code"]
        grid_iter[j] = out["iterations"]
        grid_znssd[j] = out["znssd"]
        conv = out["code"] == SubsetCode.CONVERGED
        if np.any(conv):
            seed_u = _fill_from_converged(out["u"], conv)
            seed_v = _fill_from_converged(out["v"], conv)
        # A fully failed row keeps the previous seeds.

    converged = grid_code == SubsetCode.CONVERGED
    fill_u = _fill_from_converged(grid_u, converged)
    fill_v = _fill_from_converged(grid_v, converged)

    full_u = _lattice_to_frame(fill_u, xs.astype(np.float64), ys.astype(np.float64), ref.width, ref.height)
    full_v = _lattice_to_frame(fill_v, xs.astype(np.float64), ys.astype(np.float64), ref.width, ref.height)

    native = np.zeros((ref.height, ref.width), dtype=bool)
    native[np.ix_(ys, xs)] = converged

    frac_bad = 1.0 - converged.mean() if converged.size else 1.0
    warning = None
    if frac_bad > 0.05:
        warning = f"{frac_bad:.1%} of subsets failed to converge"
        logger.warning("dic_dense: %s", warning)

    elapsed = time.perf_counter() - t0
    return DicResult(
        field=DisplacementField(full_u, full_v),
        poi_x=xs,
        poi_y=ys,
        grid_u=grid_u,
        grid_v=grid_v,
        converged=converged,
        code=grid_code,
        iterations=grid_iter,
        znssd=grid_znssd,
        native=native,
        n_points=int(nx * ny),
        elapsed_s=elapsed,
        warning=warning,
    )


class PreshiftError(RuntimeError):
    pass


def integer_preshift(
    ref: GrayImage,
    deformed: GrayImage,
    n_bands: int,
    max_shift: int = 20,
) -> DisplacementField:
    """Integer alignment per horizontal band via normalized cross-correlation.

    Bands are near-equal slices of the frame; each gets one integer
    (dx, dy) maximizing the zero-mean NCC over lags up to max_shift.  A
    peak sitting on the search border means the true shift may lie
    outside the range, which raises PreshiftError rather than returning a
    silently clipped value.
    """
    if n_bands < 1:
        raise ValueError(f"n_bands must be >= 1, got {n_bands}")
    if n_bands > ref.height:
        raise ValueError(f"n_bands {n_bands} exceeds the {ref.height} frame rows")
    if ref.values.shape != deformed.values.shape:
        raise ValueError("reference and deformed frames must share a shape")
    if max_shift < 1:
        raise ValueError(f"max_shift must be >= 1, got {max_shift}")

    u = np.zeros(ref.values.shape)
    v = np.zeros(ref.values.shape)
    row_slices = np.array_split(np.arange(ref.height), n_bands)
    for rows in row_slices:
        a0 = ref.values[rows] - ref.values[rows].mean()
        b0 = deformed.values[rows] - deformed.values[rows].mean()
        h, w = a0.shape
        if max_shift >= min(h, w):
            raise ValueError(
                f"max_shift {max_shift} too large for a {h}x{w} band"
            )
        # Full cross-correlation; zero lag sits at index (h-1, w-1).  The
        # pattern in the deformed frame is the reference moved by +(u, v),
        # so the peak lag is the band shift directly.
        num = signal.correlate(b0, a0, mode="full", method="auto")
        ea = signal.correlate(np.ones_like(b0), a0 * a0, mode="full", method="auto")
        eb = signal.correlate(b0 * b0, np.ones_like(a0), mode="full", method="auto")
        denom = np.sqrt(np.clip(ea, 0.0, None) * np.clip(eb, 0.0, None))
        ncc = np.where(denom > 1e-12, num / np.maximum(denom, 1e-300), -1.0)
        lags = ncc[
            h - 1 - max_shift : h + max_shift,
            w - 1 - max_shift : w + max_shift,
        ]
        peak = np.unravel_index(np.argmax(lags), lags.shape)
        dy = int(peak[0]) - max_shift
        dx = int(peak[1]) - max_shift
        if abs(dx) == max_shift or abs(dy) == max_shift:
            raise PreshiftError(
                f"correlation peak at the search border (shift {dx}, {dy}); raise max_shift"
            )
        u[rows] = dx
        v[rows] = dy
    return DisplacementField(u, v)


def dic_with_preshift(
    ref: GrayImage,
    deformed: GrayImage,
    cfg: DicConfig,
    n_bands: int,
    max_shift: int = 20,
) -> DicResult:
    """Band-wise integer alignment followed by subpixel matching.

    The deformed frame is first re-aligned band by band with the integer
    shifts, the subpixel pass runs on the aligned pair, and the integer
    field is added back to the result.
    """
    pre = integer_preshift(ref, deformed, n_bands, max_shift)
    ys, xs = np.mgrid[0 : ref.height, 0 : ref.width]
    sx = np.clip(xs + pre.u.astype(np.int64), 0, ref.width - 1)
    sy = np.clip(ys + pre.v.astype(np.int64), 0, ref.height - 1)
    aligned = GrayImage(deformed.values[sy, sx])
    res = dic_dense(ref, aligned, cfg)
    total = DisplacementField(res.field.u + pre.u, res.field.v + pre.v)
    res.field = total
    return res
