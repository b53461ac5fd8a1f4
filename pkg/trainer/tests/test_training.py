import csv

import pytest
import torch

from strainnet_trainer import (
    ManifestDataset,
    NetworkSpec,
    TrainingSchedule,
    Variant,
    load_checkpoint,
    train,
)
from strainnet_trainer.loss import endpoint_error

DESK_SPEC = NetworkSpec(
    variant=Variant.F, channels=(8, 16, 32, 32), decoder_channels=(32, 16, 16, 8)
)
DESK_SCHEDULE = TrainingSchedule(batch_size=16, initial_lr=1e-3, halve_every=40, epochs=10)


def zero_flow_aee(dataset):
    total = 0.0
    for i in range(len(dataset)):
        _, gt = dataset[i]
        total += torch.linalg.vector_norm(gt, dim=0).mean().item()
    return total / len(dataset)


@pytest.fixture(scope="session")
def desk_run(translation_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return train(DESK_SPEC, translation_dataset, out, schedule=DESK_SCHEDULE, seed=0)


def test_ten_epochs_decrease_training_loss(desk_run):
    assert len(desk_run.train_losses) == 10
    assert desk_run.train_losses[-1] < desk_run.train_losses[0]


def test_trained_model_beats_zero_flow(desk_run, translation_dataset):
    baseline = zero_flow_aee(ManifestDataset(translation_dataset, "test"))
    assert desk_run.val_aee[-1] < baseline


def test_log_matches_schedule(desk_run):
    with open(desk_run.log) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == [str(e) for e in range(10)]
    for r in rows:
        want = DESK_SCHEDULE.lr_at(int(r["epoch"]))
        assert float(r["lr"]) == pytest.approx(want, rel=1e-3)
    assert list(rows[0].keys()) == ["epoch", "lr", "train_loss", "val_aee"]


def test_checkpoint_reloads_and_predicts(desk_run, translation_dataset):
    model, payload = load_checkpoint(desk_run.checkpoint)
    assert payload["epoch"] == 9
    assert payload["normalization"]["kind"] == "per_image"
    assert payload["spec"]["variant"] == "f"
    ds = ManifestDataset(translation_dataset, "test")
    x, gt = ds[0]
    with torch.no_grad():
        _, full = model(x[None])
    assert endpoint_error(full, gt[None]).item() == pytest.approx(
        desk_run.val_aee[-1], abs=1.0
    )


def test_training_is_deterministic(small_dataset, tmp_path):
    schedule = TrainingSchedule(batch_size=4, initial_lr=1e-3, halve_every=40, epochs=1)
    spec = NetworkSpec(variant=Variant.F, channels=(4, 8, 8, 8), decoder_channels=(8, 8, 4, 4))
    a = train(spec, small_dataset, tmp_path / "a", schedule=schedule, seed=7)
    b = train(spec, small_dataset, tmp_path / "b", schedule=schedule, seed=7)
    assert a.train_losses == b.train_losses
    state_a = load_checkpoint(a.checkpoint)[0].state_dict()
    state_b = load_checkpoint(b.checkpoint)[0].state_dict()
    assert all(torch.equal(state_a[k], state_b[k]) for k in state_a)


def test_dataset_smaller_than_batch_is_config_error(small_dataset, tmp_path):
    schedule = TrainingSchedule(batch_size=64, epochs=1)
    with pytest.raises(ValueError, match="fewer than one"):
        train(DESK_SPEC, small_dataset, tmp_path, schedule=schedule)
