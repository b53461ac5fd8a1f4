import numpy as np
import pytest

from speckledic.fields import (
    DisplacementField,
    FieldGenSpec,
    StarSpec,
    field_from_nodes,
    node_lattice,
    random_field,
    resample_diagnostic,
    star_field,
    zero_field,
)
from speckledic.interpolate import Interp


def test_field_validates_shapes():
    with pytest.raises(ValueError, match="shape"):
        DisplacementField(np.zeros((3, 3)), np.zeros((3, 4)))


def test_zero_field_shape():
    f = zero_field(7, 4)
    assert f.u.shape == (4, 7)
    assert not f.u.any() and not f.v.any()


def test_node_lattice_covers_frame():
    nodes = node_lattice(17, 8)
    assert nodes[0] == 0
    assert nodes[-1] >= 16
    assert np.all(np.diff(nodes) == 8)


def test_region_size_must_be_at_least_two():
    with pytest.raises(ValueError, match="region_size"):
        FieldGenSpec(region_size=1)


def test_random_field_reproducible():
    spec = FieldGenSpec(region_size=8, amplitude=1.0)
    a = random_field(spec, 48, 32, seed=5)
    b = random_field(spec, 48, 32, seed=5)
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.v, b.v)
    c = random_field(spec, 48, 32, seed=6)
    assert not np.array_equal(a.u, c.u)


def test_random_field_bilinear_respects_amplitude():
    spec = FieldGenSpec(region_size=4, amplitude=0.7, interp=Interp.BILINEAR)
    f = random_field(spec, 64, 64, seed=2)
    assert np.abs(f.u).max() <= 0.7 + 1e-12
    assert np.abs(f.v).max() <= 0.7 + 1e-12


def test_random_field_boundary_ring_is_zero():
    margin = 8
    spec = FieldGenSpec(region_size=8, amplitude=1.0, boundary_margin=margin)
    f = random_field(spec, 64, 48, seed=3)
    for arr in (f.u, f.v):
        assert not arr[:margin, :].any()
        assert not arr[-margin:, :].any()
        assert not arr[:, :margin].any()
        assert not arr[:, -margin:].any()
        assert arr[margin:-margin, margin:-margin].any()


def test_field_from_nodes_interpolates_between_nodes():
    xs = node_lattice(9, 4)
    ys = node_lattice(5, 4)
    nodes = np.zeros((ys.size, xs.size))
    nodes[1, 1] = 1.0
    f = field_from_nodes(nodes, np.zeros_like(nodes), 4, Interp.BILINEAR, 9, 5)
    assert f.u[4, 4] == 1.0
    assert abs(f.u[4, 2] - 0.5) < 1e-12
    assert not f.v.any()


def test_star_field_u_is_null():
    f = star_field(StarSpec(width=100, height=21, period_min=5.0, period_max=20.0))
    assert not f.u.any()


def test_star_center_row_equals_amplitude():
    spec = StarSpec(width=120, height=41, amplitude=0.5, period_min=8.0, period_max=30.0)
    f = star_field(spec)
    np.testing.assert_allclose(f.v[20, :], 0.5, atol=1e-12)


def test_star_period_map_is_affine():
    spec = StarSpec(width=200, height=41)
    assert spec.period_at(0) == spec.period_min
    assert spec.period_at(spec.width - 1) == spec.period_max
    mid = spec.period_at((spec.width - 1) / 2)
    assert abs(mid - 0.5 * (spec.period_min + spec.period_max)) < 1e-12


def test_star_vertical_period():
    spec = StarSpec(width=64, height=201, amplitude=0.5, period_min=40.0, period_max=40.0)
    f = star_field(spec)
    yc = 100
    np.testing.assert_allclose(f.v[yc + 40, :], f.v[yc, :], atol=1e-9)
    np.testing.assert_allclose(f.v[yc + 20, :], -0.5, atol=1e-9)


def test_resample_diagnostic_round_trip_shape():
    f = star_field(StarSpec(width=64, height=33, period_min=8.0, period_max=16.0))
    g = resample_diagnostic(f, 4)
    assert g.u.shape == f.u.shape
    assert np.abs(g.v - f.v).max() < 0.5


def test_resample_diagnostic_rejects_bad_factor():
    f = zero_field(16, 16)
    with pytest.raises(ValueError, match="factor"):
        resample_diagnostic(f, 1)
