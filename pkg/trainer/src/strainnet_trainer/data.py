"""Pair loading from a generated dataset directory.

The directory contract: manifest.json at the root with a "pairs" list,
each entry carrying "dir" (relative pair directory) and "split"; every
pair directory holds ref.png, def.png and gt.flo.  Nothing else about
the producer is assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from .flow_io import read_flow

NORMALIZATION = {"kind": "per_image", "eps": 1e-6}


def normalize_frame(values: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Per-image standardization; the scheme inference must reproduce."""
    v = values.astype(np.float32)
    return (v - v.mean()) / (v.std() + eps)


def load_frame(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("I"), dtype=np.float32)


@dataclass(frozen=True)
class PairPaths:
    index: int
    ref: Path
    deformed: Path
    flow: Path


class ManifestDataset(Dataset):
    """One split of a dataset directory as (input, ground truth) tensors.

    Inputs are the two normalized frames stacked channel-wise, float32;
    ground truth is the (u, v) flow, float32.
    """

    def __init__(self, root: str | Path, split: str, max_pairs: int | None = None):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise FileNotFoundError(f"no manifest.json under {self.root}")
        manifest = json.loads(manifest_path.read_text())
        records = [p for p in manifest["pairs"] if p["split"] == split]
        if max_pairs is not None:
            records = records[:max_pairs]
        if not records:
            raise ValueError(f"split {split!r} is empty in {manifest_path}")
        self.pairs = [
            PairPaths(
                index=p["index"],
                ref=self.root / p["dir"] / "ref.png",
                deformed=self.root / p["dir"] / "def.png",
                flow=self.root / p["dir"] / "gt.flo",
            )
            for p in records
        ]

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i: int) -> tuple[torch.Tensor, torch.Tensor]:
        p = self.pairs[i]
        eps = NORMALIZATION["eps"]
        ref = normalize_frame(load_frame(p.ref), eps)
        dfm = normalize_frame(load_frame(p.deformed), eps)
        u, v = read_flow(p.flow)
        x = torch.from_numpy(np.stack([ref, dfm]))
        gt = torch.from_numpy(np.stack([u, v]))
        return x, gt
