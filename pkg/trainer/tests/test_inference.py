import numpy as np
import pytest
from PIL import Image

from strainnet_trainer import (
    NetworkSpec,
    TrainingSchedule,
    Variant,
    infer,
    read_flow,
    train,
)

from conftest import cosine_image


@pytest.fixture(scope="module")
def quick_checkpoint(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    spec = NetworkSpec(variant=Variant.F, channels=(4, 8, 8, 8), decoder_channels=(8, 8, 4, 4))
    schedule = TrainingSchedule(batch_size=4, initial_lr=1e-3, halve_every=40, epochs=2)
    return train(spec, small_dataset, out, schedule=schedule, seed=1).checkpoint


def _save_frames(tmp_path, width, height, shift=(0.6, -0.4)):
    ref = cosine_image(width, height, seed=77)
    dfm = cosine_image(width, height, seed=77, shift=shift)
    for name, img in (("ref.png", ref), ("def.png", dfm)):
        q = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
        Image.fromarray(q, mode="L").save(tmp_path / name)
    return tmp_path / "ref.png", tmp_path / "def.png"


def test_infer_unpads_to_input_size(quick_checkpoint, tmp_path):
    # 50x70 is not divisible by 16; inference pads and crops back.
    ref, dfm = _save_frames(tmp_path, width=70, height=50)
    u, v = infer(quick_checkpoint, ref, dfm, tmp_path / "out.flo")
    assert u.shape == (50, 70) and v.shape == (50, 70)
    ru, rv = read_flow(tmp_path / "out.flo")
    np.testing.assert_array_equal(ru, u)
    np.testing.assert_array_equal(rv, v)


def test_infer_is_deterministic(quick_checkpoint, tmp_path):
    ref, dfm = _save_frames(tmp_path, width=32, height=32)
    u1, v1 = infer(quick_checkpoint, ref, dfm)
    u2, v2 = infer(quick_checkpoint, ref, dfm)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(v1, v2)


def test_variant_mismatch_raises(quick_checkpoint, tmp_path):
    ref, dfm = _save_frames(tmp_path, width=32, height=32)
    with pytest.raises(ValueError, match="variant"):
        infer(quick_checkpoint, ref, dfm, variant=Variant.H)


def test_identical_frames_predict_less_than_deformed(quick_checkpoint, tmp_path):
    ref, dfm = _save_frames(tmp_path, width=32, height=32, shift=(1.0, 1.0))
    u_same, v_same = infer(quick_checkpoint, ref, ref)
    u_def, v_def = infer(quick_checkpoint, ref, dfm)
    mag_same = np.hypot(u_same, v_same).mean()
    mag_def = np.hypot(u_def, v_def).mean()
    assert mag_same < mag_def


def test_frame_shape_mismatch_raises(quick_checkpoint, tmp_path):
    ref, _ = _save_frames(tmp_path, width=32, height=32)
    other = tmp_path / "other.png"
    Image.fromarray(np.zeros((16, 32), dtype=np.uint8), mode="L").save(other)
    with pytest.raises(ValueError, match="differ"):
        infer(quick_checkpoint, ref, other)
