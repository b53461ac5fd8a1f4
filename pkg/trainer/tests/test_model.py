import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from strainnet_trainer import NetworkSpec, Variant, build_model

TINY = dict(channels=(4, 8, 8, 8, 8, 8), decoder_channels=(8, 8, 4, 4))


def test_f_output_matches_input_resolution():
    model = build_model(NetworkSpec(variant=Variant.F, **TINY))
    flows, full = model(torch.randn(1, 2, 64, 48))
    assert full.shape == (1, 2, 64, 48)
    assert flows[-1].shape == (1, 2, 64, 48)


def test_h_native_output_is_half_resolution():
    model = build_model(NetworkSpec(variant=Variant.H, **TINY))
    flows, full = model(torch.randn(1, 2, 64, 64))
    assert flows[-1].shape == (1, 2, 32, 32)
    assert full.shape == (1, 2, 64, 64)


def test_baseline_native_output_is_quarter_resolution():
    model = build_model(NetworkSpec(variant=Variant.BASELINE, **TINY))
    flows, full = model(torch.randn(1, 2, 64, 64))
    assert flows[-1].shape == (1, 2, 16, 16)
    assert full.shape == (1, 2, 64, 64)


def test_side_outputs_follow_declared_scales():
    spec = NetworkSpec(variant=Variant.F, **TINY)
    model = build_model(spec)
    flows, _ = model(torch.randn(1, 2, 32, 32))
    got = tuple(32 // f.shape[2] for f in flows)
    assert got == spec.side_output_scales


@settings(max_examples=12, deadline=None)
@given(
    variant=st.sampled_from([Variant.F, Variant.H]),
    mh=st.integers(1, 3),
    mw=st.integers(1, 3),
)
def test_shape_contract_over_random_sizes(variant, mh, mw):
    spec = NetworkSpec(variant=variant, **TINY)
    model = build_model(spec)
    h = mh * spec.divisor
    w = mw * spec.divisor
    with torch.no_grad():
        flows, full = model(torch.randn(1, 2, h, w))
    assert full.shape == (1, 2, h, w)
    assert flows[-1].shape[2] == h // spec.native_scale
    assert flows[-1].shape[3] == w // spec.native_scale


def test_indivisible_size_error_states_padding():
    model = build_model(NetworkSpec(variant=Variant.F, **TINY))
    with pytest.raises(ValueError, match=r"height 50 \(pad to 64\)"):
        model(torch.randn(1, 2, 50, 64))
    with pytest.raises(ValueError, match=r"width 70 \(pad to 80\)"):
        model(torch.randn(1, 2, 64, 70))


def test_rejects_wrong_channel_count():
    model = build_model(NetworkSpec(variant=Variant.F, **TINY))
    with pytest.raises(ValueError, match=r"\(batch, 2, H, W\)"):
        model(torch.randn(1, 3, 64, 64))


def test_zero_weights_give_zero_field():
    model = build_model(NetworkSpec(variant=Variant.F, **TINY))
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        flows, full = model(torch.randn(1, 2, 32, 32))
    for f in flows:
        assert torch.all(f == 0)
    assert torch.all(full == 0)


def test_forward_is_deterministic():
    torch.manual_seed(3)
    model = build_model(NetworkSpec(variant=Variant.F, **TINY))
    x = torch.randn(2, 2, 32, 32)
    with torch.no_grad():
        _, a = model(x)
        _, b = model(x)
    assert torch.equal(a, b)
