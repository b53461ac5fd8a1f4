"""Shared test fixtures: small analytic images and speckle scenes.

Cosine-sum images are band-limited and analytic under any displacement,
so matching and warping accuracy can be checked against closed-form
ground truth instead of resampled references.
"""

import numpy as np
import pytest

from speckledic.images import GrayImage
from speckledic.speckle import RadiusDistribution, SpeckleParams


def cosine_image(width, height, seed, displace=None):
    """Band-limited test image; displace maps (x, y) -> (u, v) arrays."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    if displace is not None:
        u, v = displace(xs, ys)
        xs = xs - u
        ys = ys - v
    img = np.full((height, width), 128.0)
    for _ in range(40):
        fx, fy = rng.uniform(-0.18, 0.18, 2)
        amp = rng.uniform(2.0, 8.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        img += amp * np.cos(2.0 * np.pi * (fx * xs + fy * ys) + phase)
    return GrayImage(img)


@pytest.fixture
def tiny_params():
    """Speckle scene small enough to render in well under a second."""
    return SpeckleParams(
        width=64,
        height=64,
        radius_dist=RadiusDistribution.UNIFORM,
        mean_radius=0.6,
        disk_count_mean=2250.0,
        contrast=0.9,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
