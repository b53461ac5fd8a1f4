"""Command-line entry point for the workbench.

Every subcommand prints a single-line JSON summary on stdout that
validates against schema/summary.schema.json.  Module errors exit 1
after writing a structured {"command", "error": {"type", "message"}}
object to stderr; argparse usage errors exit 2.  The master seed comes
from --seed, falling back to the SPECKLEDIC_SEED environment variable,
then to 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from .dic import DicConfig, dic_dense, dic_with_preshift
from .fields import DisplacementField, StarSpec, star_field
from .images import GrayImage, load_png, save_png
from .interpolate import Interp
from .metrology import (
    EvaluationROI,
    PibMode,
    aee,
    attenuation_and_columns,
    displacement_resolution,
    error_map_png,
    mae_v,
    pib_experiment,
    relative_bias,
    ripple_rms,
    spatial_resolution,
    star_eval_roi,
    strain,
    write_curves_csv,
)
from .seeding import derive_seed
from .speckle import sample_disks, star_speckle_params
from .warping import NoiseModel, add_noise, quantize, render_deformed_speckle, warp
from .speckle import render_speckle

SUMMARY_SCHEMA_VERSION = 1


def throughput_report(n_points: int, elapsed_seconds: float) -> float:
    """Points of interest per second; refuses a zero or negative time."""
    if elapsed_seconds <= 0:
        raise ValueError(f"elapsed time must be > 0, got {elapsed_seconds}")
    return n_points / elapsed_seconds


def _seed_from(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SPECKLEDIC_SEED")
    if env is not None:
        return int(env)
    return 0


def _emit(summary: dict) -> None:
    summary["schema_version"] = SUMMARY_SCHEMA_VERSION
    print(json.dumps(summary, sort_keys=True))


def _parse_roi(text: str | None) -> EvaluationROI | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"ROI must be x0,y0,width,height, got {text!r}")
    x0, y0, w, h = (int(p) for p in parts)
    return EvaluationROI(x0=x0, y0=y0, width=w, height=h)


def _star_from(args, width: int | None = None, height: int | None = None) -> StarSpec:
    return StarSpec(
        width=width if width is not None else args.width,
        height=height if height is not None else args.height,
        amplitude=args.amplitude,
        period_min=args.period_min,
        period_max=args.period_max,
    )


def _add_star_flags(p: argparse.ArgumentParser, with_size: bool = True):
    if with_size:
        p.add_argument("--width", type=int, default=2000)
        p.add_argument("--height", type=int, default=501)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--period-min", type=float, default=10.0)
    p.add_argument("--period-max", type=float, default=300.0)


def _add_dic_flags(p: argparse.ArgumentParser):
    p.add_argument("--half-size", type=int, default=10, help="subset half-size M; window is 2M+1")
    p.add_argument("--order", type=int, default=1, choices=(1, 2))
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-4)


def _dic_cfg(args) -> DicConfig:
    return DicConfig(
        half_size=args.half_size,
        order=args.order,
        step=args.step,
        max_iters=args.max_iters,
        conv_tol=args.tol,
    )


def _cmd_gen_dataset(args) -> dict:
    cfg = ds.DatasetConfig.version1() if args.version == 1 else ds.DatasetConfig.version2()
    overrides = {"master_seed": _seed_from(args)}
    if args.n_references is not None:
        overrides["n_references"] = args.n_references
    if args.train_deformations is not None:
        overrides["train_deformations"] = args.train_deformations
    cfg = dataclasses.replace(cfg, **overrides)
    t0 = time.perf_counter()
    manifest = ds.build_dataset(cfg, Path(args.out), workers=args.threads, dry_run=args.dry_run)
    return {
        "command": "gen-dataset",
        "version": args.version,
        "out": str(args.out),
        "dry_run": args.dry_run,
        "n_pairs": manifest["n_pairs"],
        "n_train": manifest["n_train"],
        "n_test": manifest["n_test"],
        "checksum": manifest["checksum"],
        "elapsed_s": time.perf_counter() - t0,
    }


def _cmd_gen_star(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed_from(args)
    star = _star_from(args)
    params = star_speckle_params(star.width, star.height)
    t0 = time.perf_counter()
    disks = sample_disks(params, derive_seed(seed, 10))
    ref = quantize(render_speckle(disks, params, supersample=args.supersample), args.bit_depth)
    fld = star_field(star)
    dfm = quantize(
        render_deformed_speckle(disks, fld, params, supersample=args.supersample),
        args.bit_depth,
    )
    save_png(ref, out / "ref.png", args.bit_depth)
    save_png(dfm, out / "def.png", args.bit_depth)
    ds.write_flow(fld, out / "gt.flo")
    elapsed = time.perf_counter() - t0
    return {
        "command": "gen-star",
        "out": str(out),
        "seed": seed,
        "width": star.width,
        "height": star.height,
        "n_disks": int(disks.x.size),
        "elapsed_s": elapsed,
    }


def _cmd_warp(args) -> dict:
    ref = load_png(args.ref)
    fld = ds.read_flow(args.field)
    t0 = time.perf_counter()
    out = warp(ref, fld, interp=Interp(args.interp), fill=args.fill)
    save_png(quantize(out, args.bit_depth), args.out, args.bit_depth)
    return {
        "command": "warp",
        "ref": str(args.ref),
        "field": str(args.field),
        "out": str(args.out),
        "interp": args.interp,
        "elapsed_s": time.perf_counter() - t0,
    }


def _cmd_add_noise(args) -> dict:
    img = load_png(args.input)
    seed = _seed_from(args)
    model = NoiseModel(gain=args.gain, offset=args.offset)
    t0 = time.perf_counter()
    noisy = quantize(add_noise(img, model, seed), args.bit_depth)
    save_png(noisy, args.out, args.bit_depth)
    return {
        "command": "add-noise",
        "input": str(args.input),
        "out": str(args.out),
        "gain": model.gain,
        "offset": model.offset,
        "seed": seed,
        "elapsed_s": time.perf_counter() - t0,
    }


def _cmd_dic(args) -> dict:
    ref = load_png(args.ref)
    dfm = load_png(args.deformed)
    cfg = _dic_cfg(args)
    if args.preshift_bands:
        res = dic_with_preshift(ref, dfm, cfg, args.preshift_bands, args.max_shift)
    else:
        res = dic_dense(ref, dfm, cfg)
    ds.write_flow(res.field, args.out)
    if args.flags:
        save_png(GrayImage(res.native.astype(np.float64) * 255.0), args.flags, 8)
    return {
        "command": "dic",
        "ref": str(args.ref),
        "deformed": str(args.deformed),
        "out": str(args.out),
        "half_size": cfg.half_size,
        "order": cfg.order,
        "step": cfg.step,
        "n_points": res.n_points,
        "converged_fraction": float(res.converged.mean()),
        "warning": res.warning,
        "elapsed_s": res.elapsed_s,
        "poi_per_s": throughput_report(res.n_points, res.elapsed_s),
    }


def _cmd_evaluate(args) -> dict:
    est = ds.read_flow(args.est)
    gt = ds.read_flow(args.gt)
    roi = _parse_roi(args.roi)
    t0 = time.perf_counter()
    a = aee(est, gt, roi)
    m = mae_v(est, gt, roi)
    scoring = time.perf_counter() - t0
    n_points = int(est.u.size)
    elapsed = args.elapsed if args.elapsed is not None else scoring
    return {
        "command": "evaluate",
        "est": str(args.est),
        "gt": str(args.gt),
        "aee": a,
        "mae": m,
        "n_points": n_points,
        "elapsed_s": elapsed,
        "poi_per_s": throughput_report(n_points, elapsed),
    }


def _cmd_metrology(args) -> dict:
    est = ds.read_flow(args.est)
    star = _star_from(args, width=est.width, height=est.height)
    roi = _parse_roi(args.roi) or star_eval_roi(star)
    gt = star_field(star)
    profile, per_column = attenuation_and_columns(est, star, roi)
    d = spatial_resolution(relative_bias(profile, star), star, args.threshold, args.smooth_width)
    if args.noisy_est:
        noisy = ds.read_flow(args.noisy_est)
        sigma_u = displacement_resolution(noisy, est, roi)
    else:
        sigma_u = 0.0
    summary = {
        "command": "metrology",
        "est": str(args.est),
        "noisy_est": str(args.noisy_est) if args.noisy_est else None,
        "aee": aee(est, gt, roi),
        "mae": mae_v(est, gt, roi),
        "d": d,
        "sigma_u": sigma_u,
        "alpha": d * sigma_u,
        "roi": [roi.x0, roi.y0, roi.width, roi.height],
    }
    if args.out_csv:
        write_curves_csv(args.out_csv, star, profile, per_column)
        summary["out_csv"] = str(args.out_csv)
    if args.error_map:
        error_map_png(est, gt, args.error_map, vmax=args.vmax)
        summary["error_map"] = str(args.error_map)
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        summary["out_json"] = str(args.out_json)
    return summary


def _cmd_pib(args) -> dict:
    star = _star_from(args)
    cfg = _dic_cfg(args)

    def estimator(ref: GrayImage, dfm: GrayImage) -> DisplacementField:
        return dic_dense(ref, dfm, cfg).field

    noise = None if args.no_noise else NoiseModel(gain=args.gain, offset=args.offset)
    res = pib_experiment(
        PibMode(args.mode),
        star,
        estimator,
        n=args.n,
        noise=noise,
        seed=_seed_from(args),
        workers=args.threads,
    )
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write(",".join(["column", "mean"] + [f"trial{t}" for t in range(res.n_ok)]) + "\n")
            for x in range(res.mean_profile.size):
                row = [str(x), f"{res.mean_profile[x]:.6f}"]
                row += [f"{res.profiles[t, x]:.6f}" for t in range(res.n_ok)]
                fh.write(",".join(row) + "\n")
    return {
        "command": "pib",
        "mode": args.mode,
        "n": args.n,
        "n_ok": res.n_ok,
        "failed": list(res.failed),
        "ripple_rms": ripple_rms(res.mean_profile),
        "out_csv": str(args.out_csv) if args.out_csv else None,
    }


def _cmd_strain(args) -> dict:
    fld = ds.read_flow(args.field)
    t0 = time.perf_counter()
    emap = strain(fld, args.component, sigma=args.sigma)
    np.save(args.out, emap)
    summary = {
        "command": "strain",
        "field": str(args.field),
        "component": args.component,
        "sigma": args.sigma,
        "out": str(args.out),
        "min": float(emap.min()),
        "max": float(emap.max()),
        "mean": float(emap.mean()),
        "elapsed_s": time.perf_counter() - t0,
    }
    return summary


def _cmd_throughput(args) -> dict:
    est = ds.read_flow(args.est)
    n_points = int(est.u.size)
    return {
        "command": "throughput",
        "est": str(args.est),
        "n_points": n_points,
        "elapsed_s": args.elapsed,
        "poi_per_s": throughput_report(n_points, args.elapsed),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speckledic", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("gen-dataset", help="build a training dataset with manifest")
    common(p)
    p.add_argument("--version", type=int, choices=(1, 2), required=True)
    p.add_argument("--out", default="dataset")
    p.add_argument("--dry-run", action="store_true", help="plan and count pairs without rendering")
    p.add_argument("--n-references", type=int, default=None)
    p.add_argument("--train-deformations", type=int, default=None)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("gen-star", help="render a star-deformed speckle pair with ground truth")
    common(p)
    p.add_argument("--out", required=True)
    _add_star_flags(p)
    p.add_argument("--supersample", type=int, default=8)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.set_defaults(func=_cmd_gen_star)

    p = sub.add_parser("warp", help="deform an image by a flow field")
    common(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interp", choices=("bilinear", "bicubic"), default="bicubic")
    p.add_argument("--fill", type=float, default=200.0)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.set_defaults(func=_cmd_warp)

    p = sub.add_parser("add-noise", help="add signal-dependent sensor noise")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gain", type=float, default=NoiseModel().gain)
    p.add_argument("--offset", type=float, default=NoiseModel().offset)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.set_defaults(func=_cmd_add_noise)

    p = sub.add_parser("dic", help="dense subset matching between two frames")
    common(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--deformed", required=True)
    p.add_argument("--out", required=True)
    _add_dic_flags(p)
    p.add_argument("--preshift-bands", type=int, default=0, help="integer band alignment first (0 = off)")
    p.add_argument("--max-shift", type=int, default=20)
    p.add_argument("--flags", default=None, help="optional PNG marking natively converged pixels")
    p.set_defaults(func=_cmd_dic)

    p = sub.add_parser("evaluate", help="score an estimated flow against ground truth")
    common(p)
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--roi", default=None, help="x0,y0,width,height")
    p.add_argument("--elapsed", type=float, default=None, help="estimator runtime for the POI/s figure")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("metrology", help="star-target report: errors, d, sigma_u, alpha")
    common(p)
    p.add_argument("--est", required=True)
    p.add_argument("--noisy-est", default=None)
    _add_star_flags(p, with_size=False)
    p.add_argument("--roi", default=None, help="x0,y0,width,height")
    p.add_argument("--threshold", type=float, default=0.10)
    p.add_argument("--smooth-width", type=int, default=30)
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--error-map", default=None)
    p.add_argument("--vmax", type=float, default=0.5)
    p.set_defaults(func=_cmd_metrology)

    p = sub.add_parser("pib", help="pattern-induced-bias trials with the built-in matcher")
    common(p)
    p.add_argument("--mode", choices=("fixed", "varied"), required=True)
    p.add_argument("--n", type=int, default=50)
    _add_star_flags(p)
    _add_dic_flags(p)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--gain", type=float, default=NoiseModel().gain)
    p.add_argument("--offset", type=float, default=NoiseModel().offset)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=_cmd_pib)

    p = sub.add_parser("strain", help="strain map from a flow field")
    common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--component", choices=("exx", "eyy", "exy"), required=True)
    p.add_argument("--sigma", type=float, default=6.0)
    p.add_argument("--out", required=True, help="output .npy path")
    p.set_defaults(func=_cmd_strain)

    p = sub.add_parser("throughput", help="points-of-interest-per-second arithmetic")
    common(p)
    p.add_argument("--est", required=True)
    p.add_argument("--elapsed", type=float, required=True)
    p.set_defaults(func=_cmd_throughput)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except Exception as exc:
        msg = {"command": args.command, "error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(msg, sort_keys=True), file=sys.stderr)
        return 1
    _emit(summary)
    return 0


def main() -> None:
    sys.exit(run())
