import dataclasses

import numpy as np
import pytest

from speckledic.images import GrayImage
from speckledic.seeding import derive_seed
from speckledic.speckle import (
    RadiusDistribution,
    ScreenThresholds,
    SpeckleParams,
    disks_from_json,
    disks_to_json,
    render_speckle,
    sample_disks,
    screen_reference,
    screening_metrics,
    star_speckle_params,
)


def test_params_validation():
    with pytest.raises(ValueError, match="contrast"):
        SpeckleParams(32, 32, RadiusDistribution.UNIFORM, contrast=1.5)
    with pytest.raises(ValueError, match="mean_radius"):
        SpeckleParams(32, 32, RadiusDistribution.UNIFORM, mean_radius=-1.0)


def test_params_dict_round_trip(tiny_params):
    back = SpeckleParams.from_dict(tiny_params.to_dict())
    assert back == tiny_params


def test_star_params_match_full_scale_settings():
    p = star_speckle_params()
    assert (p.width, p.height) == (2000, 501)
    assert p.radius_dist is RadiusDistribution.EXPONENTIAL
    assert p.mean_radius == 0.5
    assert p.contrast == 0.6
    assert p.disk_count_mean == pytest.approx(556667.0)


def test_star_params_scale_count_with_area():
    full = star_speckle_params()
    half = star_speckle_params(1000, 501)
    assert half.disk_count_mean == pytest.approx(full.disk_count_mean / 2)


def test_sampling_deterministic(tiny_params):
    a = sample_disks(tiny_params, 99)
    b = sample_disks(tiny_params, 99)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.r, b.r)
    c = sample_disks(tiny_params, 100)
    assert a.x.size != c.x.size or not np.array_equal(a.x, c.x)


def test_disk_count_density():
    """Mean disks per pixel across seeds tracks count/area within 2%."""
    params = SpeckleParams(256, 256, RadiusDistribution.UNIFORM)
    counts = [sample_disks(params, derive_seed(5, s)).x.size for s in range(100)]
    per_pixel = np.mean(counts) / (256 * 256)
    assert abs(per_pixel - 0.549) / 0.549 < 0.02


def test_uniform_radius_law(tiny_params):
    params = dataclasses.replace(tiny_params, disk_count_mean=20000.0)
    d = sample_disks(params, 1)
    assert d.r.max() <= 2 * params.mean_radius
    assert abs(d.r.mean() - params.mean_radius) < 0.02


def test_exponential_radius_law(tiny_params):
    params = dataclasses.replace(
        tiny_params, radius_dist=RadiusDistribution.EXPONENTIAL, disk_count_mean=20000.0
    )
    d = sample_disks(params, 1)
    assert abs(d.r.mean() - params.mean_radius) < 0.02
    assert d.r.max() > 2 * params.mean_radius


def test_poisson_radius_law_rejects_zero(tiny_params):
    params = dataclasses.replace(
        tiny_params, radius_dist=RadiusDistribution.POISSON, disk_count_mean=20000.0
    )
    d = sample_disks(params, 1)
    assert np.all(d.r >= 1)
    assert np.all(d.r == np.round(d.r))
    m = params.mean_radius
    expect = m / (1.0 - np.exp(-m))
    assert abs(d.r.mean() - expect) < 0.05


def test_centers_cover_extended_frame(tiny_params):
    params = dataclasses.replace(tiny_params, disk_count_mean=30000.0)
    d = sample_disks(params, 4)
    m = 2 * params.mean_radius
    assert d.x.min() < 0 and d.x.max() > params.width
    assert d.x.min() >= -0.5 - m and d.x.max() <= params.width - 0.5 + m
    assert d.y.min() >= -0.5 - m and d.y.max() <= params.height - 0.5 + m


def test_disks_json_round_trip(tiny_params, tmp_path):
    d = sample_disks(tiny_params, 7)
    disks_to_json(d, tiny_params, 7, tmp_path / "disks.json")
    back, params, seed = disks_from_json(tmp_path / "disks.json")
    assert params == tiny_params
    assert seed == 7
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.r, d.r)


def test_empty_disk_set_renders_background(tiny_params):
    params = dataclasses.replace(tiny_params, disk_count_mean=0.0)
    disks = sample_disks(params, 0)
    img = render_speckle(disks, params)
    np.testing.assert_array_equal(img.values, np.full((64, 64), params.background))


def test_single_big_disk_saturates_center(tiny_params):
    disks = sample_disks(dataclasses.replace(tiny_params, disk_count_mean=0.0), 0)
    disks = dataclasses.replace(disks, x=np.array([32.0]), y=np.array([32.0]), r=np.array([10.0]))
    img = render_speckle(disks, tiny_params)
    covered = tiny_params.background - tiny_params.contrast * (
        tiny_params.background - tiny_params.foreground
    )
    assert img.values[32, 32] == pytest.approx(covered, abs=1e-9)
    assert img.values[2, 2] == pytest.approx(tiny_params.background, abs=1e-9)


def test_render_deterministic(tiny_params):
    disks = sample_disks(tiny_params, 11)
    a = render_speckle(disks, tiny_params)
    b = render_speckle(disks, tiny_params)
    np.testing.assert_array_equal(a.values, b.values)


def test_intensity_bounds_and_contrast_monotonicity(tiny_params):
    disks = sample_disks(tiny_params, 12)
    img = render_speckle(disks, tiny_params)
    lo = tiny_params.background - tiny_params.contrast * (
        tiny_params.background - tiny_params.foreground
    )
    assert img.values.min() >= lo - 1e-9
    assert img.values.max() <= tiny_params.background + 1e-9

    darker = dataclasses.replace(tiny_params, contrast=1.0)
    img2 = render_speckle(disks, darker)
    covered = img.values < tiny_params.background - 1e-9
    assert np.all(img2.values[covered] < img.values[covered])
    np.testing.assert_array_equal(
        img2.values[~covered], img.values[~covered]
    )


def test_supersampling_convergence(tiny_params):
    """Doubling sample density moves no pixel by a visible amount."""
    params = dataclasses.replace(tiny_params, disk_count_mean=2250.0)
    disks = sample_disks(params, 13)
    img8 = render_speckle(disks, params, supersample=8)
    img16 = render_speckle(disks, params, supersample=16)
    assert np.abs(img8.values - img16.values).max() < 1.0


def test_screen_rejects_uniform_image():
    assert not screen_reference(GrayImage(np.full((64, 64), 180.0)))


def test_screen_rejects_giant_blob(tiny_params):
    params = SpeckleParams(256, 256, RadiusDistribution.UNIFORM, disk_count_mean=0.0)
    disks = sample_disks(params, 0)
    disks = dataclasses.replace(
        disks, x=np.array([128.0]), y=np.array([128.0]), r=np.array([100.0])
    )
    img = render_speckle(disks, params)
    assert not screen_reference(img)


def test_screen_accepts_nominal_renders():
    """Default-settings frames pass screening; thresholds frozen after a
    100-seed measurement showing acceptance well above nine in ten."""
    params = SpeckleParams(256, 256, RadiusDistribution.UNIFORM)
    accepted = 0
    for seed in range(10):
        disks = sample_disks(params, derive_seed(321, seed))
        accepted += screen_reference(render_speckle(disks, params))
    assert accepted >= 9


def test_screening_metrics_report_both_values(tiny_params):
    disks = sample_disks(tiny_params, 14)
    rms, blob = screening_metrics(render_speckle(disks, tiny_params), ScreenThresholds())
    assert rms > 0
    assert 0 <= blob <= 1
