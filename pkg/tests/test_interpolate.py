import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speckledic.interpolate import Interp, catmull_rom_weights, sample_bilinear, sample_image


def test_weights_at_zero_pick_center_sample():
    w = catmull_rom_weights(np.array([0.0]))
    np.testing.assert_allclose([w[0][0], w[1][0], w[2][0], w[3][0]], [0.0, 1.0, 0.0, 0.0], atol=1e-15)


def test_weights_at_one_pick_next_sample():
    w = catmull_rom_weights(np.array([1.0]))
    np.testing.assert_allclose([w[0][0], w[1][0], w[2][0], w[3][0]], [0.0, 0.0, 1.0, 0.0], atol=1e-15)


@given(st.floats(0.0, 1.0))
def test_weights_form_partition_of_unity(t):
    w = catmull_rom_weights(np.array([t]))
    assert abs(sum(x[0] for x in w) - 1.0) < 1e-12


def test_bilinear_matches_manual():
    arr = np.array([[0.0, 10.0], [20.0, 30.0]])
    got = sample_bilinear(arr, np.array([0.25]), np.array([0.5]))
    # (1-.5)((1-.25)*0 + .25*10) + .5((1-.25)*20 + .25*30)
    assert abs(got[0] - (0.5 * 2.5 + 0.5 * 22.5)) < 1e-12


def test_bilinear_clamps_at_edges():
    arr = np.arange(9, dtype=float).reshape(3, 3)
    got = sample_bilinear(arr, np.array([-5.0, 10.0]), np.array([0.0, 2.0]))
    assert got[0] == arr[0, 0]
    assert got[1] == arr[2, 2]


@pytest.mark.parametrize("interp", [Interp.BILINEAR, Interp.BICUBIC])
def test_exact_at_grid_points(interp, rng):
    arr = rng.uniform(0, 255, (10, 12))
    qy, qx = np.mgrid[0:10, 0:12].astype(float)
    got = sample_image(arr, qx.ravel(), qy.ravel(), interp, fill=0.0)
    np.testing.assert_allclose(got, arr.ravel(), atol=1e-10)


@settings(max_examples=30)
@given(
    a=st.floats(-2.0, 2.0),
    bx=st.floats(-0.05, 0.05),
    by=st.floats(-0.05, 0.05),
)
def test_bicubic_reproduces_affine_surfaces(a, bx, by):
    ys, xs = np.mgrid[0:16, 0:16].astype(float)
    arr = a + bx * xs + by * ys
    q = np.linspace(2.0, 12.7, 25)
    got = sample_image(arr, q, q[::-1], Interp.BICUBIC, fill=0.0)
    want = a + bx * q + by * q[::-1]
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_fill_outside_frame():
    arr = np.full((6, 6), 50.0)
    got = sample_image(arr, np.array([-3.5, 2.0, 9.0]), np.array([2.0, -4.0, 2.0]), Interp.BILINEAR, fill=200.0)
    np.testing.assert_allclose(got, [200.0, 200.0, 200.0])
    inside = sample_image(arr, np.array([2.0]), np.array([2.0]), Interp.BILINEAR, fill=200.0)
    assert inside[0] == 50.0
