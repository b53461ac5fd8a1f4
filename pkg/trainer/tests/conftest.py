import json

import numpy as np
import pytest
from PIL import Image

from strainnet_trainer.flow_io import write_flow


def cosine_image(width, height, seed, shift=(0.0, 0.0)):
    """Band-limited random texture, evaluable at shifted positions exactly."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    xs = xs - shift[0]
    ys = ys - shift[1]
    img = np.full((height, width), 128.0)
    for _ in range(30):
        fx, fy = rng.uniform(-0.18, 0.18, 2)
        amp = rng.uniform(2.0, 8.0)
        phase = rng.uniform(0, 2 * np.pi)
        img += amp * np.cos(2 * np.pi * (fx * xs + fy * ys) + phase)
    return img


def write_pair(pair_dir, seed, u0, v0, size):
    pair_dir.mkdir(parents=True)
    ref = cosine_image(size, size, seed)
    dfm = cosine_image(size, size, seed, shift=(u0, v0))
    for name, img in (("ref.png", ref), ("def.png", dfm)):
        q = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
        Image.fromarray(q, mode="L").save(pair_dir / name)
    write_flow(np.full((size, size), u0), np.full((size, size), v0), pair_dir / "gt.flo")


def make_dataset(root, n_train, n_test, size=32, seed=0):
    """Translation pairs in the dataset directory layout the trainer reads."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_train + n_test):
        split = "train" if i < n_train else "test"
        u0, v0 = rng.uniform(-1.0, 1.0, 2)
        rel = f"pairs/{i:05d}"
        write_pair(root / rel, seed=1000 + i, u0=float(u0), v0=float(v0), size=size)
        pairs.append({"index": i, "dir": rel, "split": split})
    manifest = {"schema_version": 1, "n_pairs": len(pairs), "pairs": pairs}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return root


@pytest.fixture(scope="session")
def translation_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("flowdata")
    return make_dataset(root, n_train=200, n_test=32)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("flowdata_small")
    return make_dataset(root, n_train=20, n_test=4, seed=5)
