import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cosine_image
from speckledic.dic import (
    DicConfig,
    PreshiftError,
    SubsetCode,
    _params_o1,
    _params_o2,
    _warp_matrices_o1,
    _warp_matrices_o2,
    dic_dense,
    dic_with_preshift,
    icgn_subset,
    integer_preshift,
)
from speckledic.images import GrayImage


def pair(seed, displace):
    ref = cosine_image(96, 96, seed)
    dfm = cosine_image(96, 96, seed, displace)
    return ref, dfm


def test_config_validation():
    with pytest.raises(ValueError, match="half_size"):
        DicConfig(half_size=2)
    with pytest.raises(ValueError, match="order"):
        DicConfig(order=3)
    with pytest.raises(ValueError, match="step"):
        DicConfig(step=0)


@settings(max_examples=50)
@given(st.lists(st.floats(-0.2, 0.2), min_size=6, max_size=6))
def test_affine_warp_params_round_trip(p):
    params = np.array([p])
    back = _params_o1(_warp_matrices_o1(params))
    np.testing.assert_allclose(back, params, atol=1e-14)


@settings(max_examples=50)
@given(st.lists(st.floats(-0.05, 0.05), min_size=12, max_size=12))
def test_quadratic_warp_params_round_trip(p):
    params = np.array([p])
    back = _params_o2(_warp_matrices_o2(params))
    np.testing.assert_allclose(back, params, atol=1e-14)


def test_quadratic_identity_matrix():
    m = _warp_matrices_o2(np.zeros((1, 12)))[0]
    np.testing.assert_allclose(m, np.eye(6), atol=1e-15)


def test_translation_recovery_subpixel():
    worst = 0.0
    for du, dv in [(-0.5, 0.25), (0.0, 0.0), (0.4, -0.3)]:
        ref, dfm = pair(7, lambda xs, ys: (np.full_like(xs, du), np.full_like(ys, dv)))
        r = icgn_subset(ref, dfm, (48, 48), (0.0, 0.0), DicConfig(half_size=10))
        assert r.converged
        worst = max(worst, abs(r.u - du), abs(r.v - dv))
    assert worst < 5e-3


def test_affine_gradients_recovered():
    aff = (0.3, 0.004, -0.003, -0.2, 0.002, 0.005)

    def displace(xs, ys):
        xc, yc = xs - 48.0, ys - 48.0
        return (
            aff[0] + aff[1] * xc + aff[2] * yc,
            aff[3] + aff[4] * xc + aff[5] * yc,
        )

    ref, dfm = pair(7, displace)
    r = icgn_subset(ref, dfm, (48, 48), (0.0, 0.0), DicConfig(half_size=10))
    assert r.converged
    assert abs(r.u - aff[0]) < 5e-3
    assert abs(r.v - aff[3]) < 5e-3
    for got, want in zip(r.params[[1, 2, 4, 5]], [aff[1], aff[2], aff[4], aff[5]]):
        assert abs(got - want) < 2e-4


def test_second_order_recovers_curvature():
    quad = (0.0008, -0.0005, 0.0006)

    def displace(xs, ys):
        xc, yc = xs - 48.0, ys - 48.0
        u = 0.2 + quad[0] * xc * xc + quad[1] * xc * yc
        v = -0.1 + quad[2] * yc * yc
        return u, v

    ref, dfm = pair(7, displace)
    r = icgn_subset(ref, dfm, (48, 48), (0.0, 0.0), DicConfig(half_size=10, order=2))
    assert r.converged
    assert abs(r.params[3] - 2 * quad[0]) < 2e-4
    assert abs(r.params[4] - quad[1]) < 2e-4
    assert abs(r.params[11] - 2 * quad[2]) < 2e-4


def test_zncc_is_one_minus_half_znssd():
    ref, dfm = pair(3, lambda xs, ys: (np.full_like(xs, 0.2), np.zeros_like(ys)))
    r = icgn_subset(ref, dfm, (48, 48), (0.0, 0.0), DicConfig(half_size=8))
    assert r.zncc == 1.0 - 0.5 * r.znssd
    assert r.zncc > 0.999


def test_flat_reference_flagged():
    ref = GrayImage(np.full((64, 64), 100.0))
    dfm = cosine_image(64, 64, 5)
    r = icgn_subset(ref, dfm, (32, 32), (0.0, 0.0), DicConfig(half_size=6))
    assert not r.converged
    assert r.code == SubsetCode.FLAT_REFERENCE


def test_flat_target_flagged():
    ref = cosine_image(64, 64, 5)
    dfm = GrayImage(np.full((64, 64), 100.0))
    r = icgn_subset(ref, dfm, (32, 32), (0.0, 0.0), DicConfig(half_size=6))
    assert not r.converged
    assert r.code in (SubsetCode.FLAT_TARGET, SubsetCode.DIVERGED)


def test_out_of_bounds_flagged():
    ref = cosine_image(64, 64, 5)
    dfm = cosine_image(64, 64, 5)
    r = icgn_subset(ref, dfm, (6, 32), (-20.0, 0.0), DicConfig(half_size=6))
    assert not r.converged
    assert r.code == SubsetCode.OUT_OF_BOUNDS


def test_center_too_close_to_edge_rejected():
    ref = cosine_image(64, 64, 5)
    with pytest.raises(ValueError, match="half-size"):
        icgn_subset(ref, ref, (2, 32), (0.0, 0.0), DicConfig(half_size=6))


def test_dense_recovers_smooth_field():
    def displace(xs, ys):
        u = 0.3 * np.sin(2 * np.pi * xs / 96.0)
        v = 0.2 * np.cos(2 * np.pi * ys / 96.0)
        return u, v

    ref = cosine_image(128, 96, 11)
    dfm = cosine_image(128, 96, 11, lambda xs, ys: (
        0.3 * np.sin(2 * np.pi * xs / 96.0),
        0.2 * np.cos(2 * np.pi * ys / 96.0),
    ))
    cfg = DicConfig(half_size=8, step=2)
    res = dic_dense(ref, dfm, cfg)
    assert res.warning is None
    assert res.converged.mean() > 0.99
    ys, xs = np.mgrid[0:96, 0:128].astype(float)
    want_u = 0.3 * np.sin(2 * np.pi * xs / 96.0)
    inner = np.s_[16:-16, 16:-16]
    # A 17 px window on a 96 px wavelength attenuates by ~5%, so the
    # systematic floor is ~0.015 on the 0.3 amplitude.
    assert np.abs(res.field.u[inner] - want_u[inner]).max() < 0.03
    assert res.n_points == res.grid_u.size
    assert res.poi_x[0] == cfg.half_size
    assert res.elapsed_s > 0
    assert res.points_per_second > 0


def test_dense_native_mask_marks_margins():
    ref = cosine_image(64, 48, 9)
    res = dic_dense(ref, ref, DicConfig(half_size=6))
    m = 6
    assert not res.native[:m, :].any()
    assert not res.native[:, :m].any()
    assert res.native[m:-m, m:-m].all()


def test_dense_warns_when_matching_fails():
    ref = cosine_image(48, 48, 9)
    flat = GrayImage(np.full((48, 48), 90.0))
    res = dic_dense(ref, flat, DicConfig(half_size=6))
    assert res.warning is not None
    assert res.converged.mean() == 0.0
    assert not res.field.u.any()


def test_preshift_recovers_per_band_shifts():
    base = cosine_image(96, 64, 15).values
    shifted = np.roll(np.roll(base, 4, axis=1), -2, axis=0)
    f = integer_preshift(GrayImage(base), GrayImage(shifted), n_bands=1, max_shift=8)
    assert f.u[0, 0] == 4.0
    assert f.v[0, 0] == -2.0


def test_preshift_border_peak_raises():
    base = cosine_image(64, 64, 15).values
    shifted = np.roll(base, 6, axis=1)
    with pytest.raises(PreshiftError, match="border"):
        integer_preshift(GrayImage(base), GrayImage(shifted), n_bands=1, max_shift=6)


def test_preshift_validates_band_count():
    img = cosine_image(32, 32, 1)
    with pytest.raises(ValueError, match="n_bands"):
        integer_preshift(img, img, n_bands=0)
    with pytest.raises(ValueError, match="rows"):
        integer_preshift(img, img, n_bands=64)


def test_preshift_then_subpixel_matches_total():
    shift_u = 6.3
    ref = cosine_image(96, 72, 17)
    dfm = cosine_image(96, 72, 17, lambda xs, ys: (np.full_like(xs, shift_u), np.zeros_like(ys)))
    res = dic_with_preshift(ref, dfm, DicConfig(half_size=8, step=2), n_bands=2, max_shift=10)
    inner = np.s_[20:-20, 20:-20]
    assert np.abs(res.field.u[inner] - shift_u).max() < 0.01
    assert np.abs(res.field.v[inner]).max() < 0.01
