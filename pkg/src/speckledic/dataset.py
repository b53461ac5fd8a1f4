"""Dataset builds: flow interchange files, pair layout, manifest, checksums.

A dataset is a directory of reference frames and deformed pairs::

    refs/NNN.png
    pairs/NNNNN/{ref.png, def.png, gt.flo, meta.json}
    manifest.json

Every random draw is keyed by (master_seed, purpose, index) so rebuilding
with the same master seed reproduces each file bit for bit, regardless of
worker count or build order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path

import numpy as np

from .fields import DisplacementField, FieldGenSpec, random_field
from .images import GrayImage, save_png
from .interpolate import Interp
from .seeding import derive_seed, rng_from
from .speckle import (
    RadiusDistribution,
    ScreenThresholds,
    SpeckleParams,
    render_speckle,
    sample_disks,
    screen_reference,
)
from .warping import NoiseModel, add_noise, quantize, warp

FLOW_MAGIC = 202021.25
MANIFEST_SCHEMA_VERSION = 1

# Purpose tags for seed derivation; frozen, changing them changes datasets.
_TAG_REF_PARAMS = 1
_TAG_REF_DISKS = 2
_TAG_PAIR = 3
_TAG_FIELD = 1
_TAG_NOISE_REF = 2
_TAG_NOISE_DEF = 3


class FlowFormatError(ValueError):
    """Flow file rejected; message names the byte offset of the problem."""


def write_flow(field: DisplacementField, path: str | Path) -> None:
    """Write a two-band float32 flow file (u, v interleaved, row major)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLOW_MAGIC))
        fh.write(struct.pack("<ii", field.width, field.height))
        inter = np.empty((field.height, field.width, 2), dtype="<f4")
        inter[..., 0] = field.u
        inter[..., 1] = field.v
        fh.write(inter.tobytes())


def read_flow(path: str | Path) -> DisplacementField:
    """Read a flow file back into float64 u, v planes.

    Raises
    ------
    FlowFormatError
        On a bad magic number, truncated payload, or non-finite values;
        the message names the byte offset at fault.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FlowFormatError(f"file ends at offset {len(raw)}, header needs 12 bytes")
    (magic,) = struct.unpack_from("<f", raw, 0)
    if magic != np.float32(FLOW_MAGIC):
        raise FlowFormatError(f"bad magic number {magic!r} at offset 0")
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"non-positive dimensions {width}x{height} at offset 4")
    expected = 12 + width * height * 8
    if len(raw) < expected:
        raise FlowFormatError(f"file ends at offset {len(raw)}, expected {expected} bytes")
    data = np.frombuffer(raw, dtype="<f4", count=width * height * 2, offset=12)
    bad = np.nonzero(~np.isfinite(data))[0]
    if bad.size:
        raise FlowFormatError(f"non-finite value at offset {12 + int(bad[0]) * 4}")
    planes = data.reshape(height, width, 2).astype(np.float64)
    return DisplacementField(planes[..., 0], planes[..., 1])


class DatasetVersion(Enum):
    V1 = 1
    V2 = 2


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a dataset build, seeds included.

    train_deformations and test_deformations count pairs per (reference,
    region_size) combination.  Speckle attributes of each reference are
    drawn uniformly from the given ranges; the disk count is fixed.
    """

    version: DatasetVersion
    master_seed: int = 0
    n_references: int = 363
    train_deformations: int = 100
    test_deformations: int = 1
    region_sizes: tuple[int, ...] = (8,)
    frame_width: int = 256
    frame_height: int = 256
    disk_count: float = 36_000.0
    mean_radius_range: tuple[float, float] = (0.45, 0.8)
    contrast_range: tuple[float, float] = (0.5, 1.0)
    amplitude: float = 1.0
    interp: Interp = Interp.BILINEAR
    noise: NoiseModel | None = None
    bit_depth: int = 8
    supersample: int = 8
    max_screen_attempts: int = 20

    def __post_init__(self):
        if self.n_references < 1:
            raise ValueError("n_references must be >= 1")
        if self.train_deformations < 0 or self.test_deformations < 0:
            raise ValueError("deformation counts must be >= 0")
        if self.train_deformations + self.test_deformations == 0:
            raise ValueError("at least one deformation per reference is required")
        if not self.region_sizes or any(r < 2 for r in self.region_sizes):
            raise ValueError(f"region_sizes must all be >= 2, got {self.region_sizes}")

    @classmethod
    def version1(cls, master_seed: int = 0, **overrides) -> "DatasetConfig":
        """Noiseless single-region-size build: 363 x (100 train + 1 test)."""
        kw = dict(
            version=DatasetVersion.V1,
            master_seed=master_seed,
            region_sizes=(8,),
            interp=Interp.BILINEAR,
            noise=None,
        )
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def version2(cls, master_seed: int = 0, **overrides) -> "DatasetConfig":
        """Multi-scale noisy build: 6 region sizes x 363 refs x 10 pairs.

        All pairs are training data; validation reuses the version-1 test
        split, so test_deformations defaults to zero here.
        """
        kw = dict(
            version=DatasetVersion.V2,
            master_seed=master_seed,
            train_deformations=10,
            test_deformations=0,
            region_sizes=(4, 8, 16, 32, 64, 128),
            interp=Interp.BICUBIC,
            noise=NoiseModel(),
        )
        kw.update(overrides)
        return cls(**kw)

    @property
    def pairs_per_reference(self) -> int:
        return len(self.region_sizes) * (self.train_deformations + self.test_deformations)

    @property
    def n_pairs(self) -> int:
        return self.n_references * self.pairs_per_reference

    def to_dict(self) -> dict:
        return {
            "version": self.version.value,
            "master_seed": self.master_seed,
            "n_references": self.n_references,
            "train_deformations": self.train_deformations,
            "test_deformations": self.test_deformations,
            "region_sizes": list(self.region_sizes),
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "disk_count": self.disk_count,
            "mean_radius_range": list(self.mean_radius_range),
            "contrast_range": list(self.contrast_range),
            "amplitude": self.amplitude,
            "interp": self.interp.value,
            "noise": None if self.noise is None else {"gain": self.noise.gain, "offset": self.noise.offset},
            "bit_depth": self.bit_depth,
            "supersample": self.supersample,
            "max_screen_attempts": self.max_screen_attempts,
        }


@dataclass(frozen=True)
class PairPlan:
    index: int
    reference: int
    region_size: int
    split: str
    seed: int


class DatasetError(RuntimeError):
    pass


def plan_pairs(cfg: DatasetConfig) -> list[PairPlan]:
    """Deterministic pair list; the seed depends only on (master_seed, index)."""
    plans = []
    idx = 0
    for ref in range(cfg.n_references):
        for size in cfg.region_sizes:
            for k in range(cfg.train_deformations + cfg.test_deformations):
                split = "train" if k < cfg.train_deformations else "test"
                plans.append(
                    PairPlan(idx, ref, size, split, derive_seed(cfg.master_seed, _TAG_PAIR, idx))
                )
                idx += 1
    return plans


def draw_reference_params(cfg: DatasetConfig, ref_index: int, attempt: int) -> SpeckleParams:
    """Per-reference speckle attributes, a pure function of the seeds."""
    rng = rng_from(cfg.master_seed, _TAG_REF_PARAMS, ref_index, attempt)
    dist = rng.choice([RadiusDistribution.UNIFORM, RadiusDistribution.EXPONENTIAL, RadiusDistribution.POISSON])
    mean_radius = float(rng.uniform(*cfg.mean_radius_range))
    contrast = float(rng.uniform(*cfg.contrast_range))
    return SpeckleParams(
        width=cfg.frame_width,
        height=cfg.frame_height,
        radius_dist=dist,
        mean_radius=mean_radius,
        disk_count_mean=cfg.disk_count,
        contrast=contrast,
    )


def render_reference(cfg: DatasetConfig, ref_index: int) -> tuple[GrayImage, SpeckleParams, int, int]:
    """Render one screened reference; retries with fresh draws until accepted.

    Returns (clean float image, params, disk seed, attempts used).
    """
    for attempt in range(cfg.max_screen_attempts):
        params = draw_reference_params(cfg, ref_index, attempt)
        disk_seed = derive_seed(cfg.master_seed, _TAG_REF_DISKS, ref_index, attempt)
        img = render_speckle(sample_disks(params, disk_seed), params, cfg.supersample)
        if screen_reference(img, ScreenThresholds()):
            return img, params, disk_seed, attempt + 1
    raise DatasetError(
        f"reference {ref_index}: no rendering passed screening in {cfg.max_screen_attempts} attempts"
    )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _build_pair(args) -> tuple[dict, list[tuple[str, str]]]:
    """Render and write one pair; returns (record, [(relpath, sha256)])."""
    cfg, out_dir, p, ref_values = args
    out = Path(out_dir)
    pair_dir = out / "pairs" / f"{p.index:05d}"
    pair_dir.mkdir(parents=True, exist_ok=True)
    ref_img = GrayImage(ref_values)

    fspec = FieldGenSpec(region_size=p.region_size, amplitude=cfg.amplitude, interp=cfg.interp)
    field = random_field(fspec, cfg.frame_width, cfg.frame_height, derive_seed(p.seed, _TAG_FIELD))
    deformed = warp(ref_img, field, cfg.interp, fill=200.0)

    if cfg.noise is not None:
        ref_out = add_noise(ref_img, cfg.noise, derive_seed(p.seed, _TAG_NOISE_REF))
        def_out = add_noise(deformed, cfg.noise, derive_seed(p.seed, _TAG_NOISE_DEF))
    else:
        ref_out, def_out = ref_img, deformed

    save_png(quantize(ref_out, cfg.bit_depth), pair_dir / "ref.png", cfg.bit_depth)
    save_png(quantize(def_out, cfg.bit_depth), pair_dir / "def.png", cfg.bit_depth)
    write_flow(field, pair_dir / "gt.flo")

    meta = {
        "pair": p.index,
        "reference": p.reference,
        "region_size": p.region_size,
        "split": p.split,
        "seed": p.seed,
        "interp": cfg.interp.value,
        "noise": None if cfg.noise is None else {"gain": cfg.noise.gain, "offset": cfg.noise.offset},
    }
    (pair_dir / "meta.json").write_text(json.dumps(meta, indent=1))

    rel = f"pairs/{p.index:05d}"
    record = {
        "index": p.index,
        "dir": rel,
        "reference": p.reference,
        "region_size": p.region_size,
        "split": p.split,
        "seed": p.seed,
    }
    hashes = [(f"{rel}/{name}", _sha256(pair_dir / name)) for name in ("ref.png", "def.png", "gt.flo", "meta.json")]
    return record, hashes


def build_dataset(
    cfg: DatasetConfig,
    out_dir: str | Path,
    workers: int = 1,
    dry_run: bool = False,
) -> dict:
    """Build (or, with dry_run, only plan) a dataset; returns the manifest.

    The deformed frame is always warped from the clean float rendering;
    noise, when enabled, is added independently to the reference and the
    deformed frame afterwards, then both are quantized.  Pairs may be
    built in parallel: every pair's randomness comes from its own seed, so
    the result is identical for any worker count.
    """
    plans = plan_pairs(cfg)
    manifest: dict = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "version": cfg.version.value,
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
        "n_pairs": len(plans),
        "n_train": sum(1 for p in plans if p.split == "train"),
        "n_test": sum(1 for p in plans if p.split == "test"),
    }
    if dry_run:
        manifest["pairs"] = [p.__dict__ | {"dir": f"pairs/{p.index:05d}"} for p in plans]
        manifest["references"] = None
        manifest["checksum"] = None
        return manifest

    out = Path(out_dir)
    (out / "refs").mkdir(parents=True, exist_ok=True)
    hashes: list[tuple[str, str]] = []

    refs = []
    ref_images: dict[int, np.ndarray] = {}
    for i in range(cfg.n_references):
        img, params, disk_seed, attempts = render_reference(cfg, i)
        ref_images[i] = img.values
        rel = f"refs/{i:03d}.png"
        save_png(quantize(img, cfg.bit_depth), out / rel, cfg.bit_depth)
        hashes.append((rel, _sha256(out / rel)))
        refs.append(
            {"index": i, "file": rel, "seed": disk_seed, "attempts": attempts, "params": params.to_dict()}
        )

    tasks = [(cfg, str(out), p, ref_images[p.reference]) for p in plans]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for record, pair_hashes in pool.map(_build_pair, tasks, chunksize=4):
                records.append(record)
                hashes.extend(pair_hashes)
    else:
        for task in tasks:
            record, pair_hashes = _build_pair(task)
            records.append(record)
            hashes.extend(pair_hashes)

    digest = hashlib.sha256()
    for rel, ha in sorted(hashes):
        digest.update(f"{rel}:{ha}\n".encode())

    manifest["references"] = refs
    manifest["pairs"] = records
    manifest["files"] = dict(sorted(hashes))
    manifest["checksum"] = digest.hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
