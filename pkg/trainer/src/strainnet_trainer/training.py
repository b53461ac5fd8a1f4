"""Training loop: deterministic ordering, CSV log, atomic checkpoints."""

from __future__ import annotations

import csv
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .config import LossSpec, NetworkSpec, TrainingSchedule
from .data import NORMALIZATION, ManifestDataset
from .loss import endpoint_error, multiscale_loss
from .model import FlowNet, build_model

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.pt"
LOG_NAME = "training_log.csv"
LOG_HEADER = ("epoch", "lr", "train_loss", "val_aee")


def save_checkpoint(
    path: str | Path,
    model: FlowNet,
    spec: NetworkSpec,
    loss_spec: LossSpec,
    schedule: TrainingSchedule,
    epoch: int,
) -> None:
    """Write-temp-then-rename so a crash never leaves a torn file."""
    path = Path(path)
    payload = {
        "spec": spec.to_dict(),
        "loss_weights": list(loss_spec.weights),
        "schedule": schedule.to_dict(),
        "normalization": dict(NORMALIZATION),
        "epoch": epoch,
        "model_state": model.state_dict(),
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> tuple[FlowNet, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    spec = NetworkSpec.from_dict(payload["spec"])
    model = build_model(spec)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


@dataclass(frozen=True)
class TrainResult:
    checkpoint: Path
    log: Path
    train_losses: tuple[float, ...]
    val_aee: tuple[float, ...]


def _validation_aee(model: FlowNet, loader: DataLoader) -> float:
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for x, gt in loader:
            _, full = model(x)
            total += endpoint_error(full, gt).item() * x.shape[0]
            count += x.shape[0]
    model.train()
    return total / count


def train(
    spec: NetworkSpec,
    dataset_root: str | Path,
    out_dir: str | Path,
    schedule: TrainingSchedule = TrainingSchedule(),
    seed: int = 0,
    loss_spec: LossSpec | None = None,
    val_split: str = "test",
    max_pairs: int | None = None,
    workers: int = 0,
) -> TrainResult:
    """Optimize the multi-scale loss over the manifest's training split.

    Ordering is deterministic for a given seed regardless of workers;
    the checkpoint and log are rewritten after every epoch, so the
    longest window a crash can lose is one epoch.
    """
    if loss_spec is None:
        loss_spec = LossSpec.for_spec(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_set = ManifestDataset(dataset_root, "train", max_pairs=max_pairs)
    if len(train_set) < schedule.batch_size:
        raise ValueError(
            f"training split has {len(train_set)} pairs, fewer than one "
            f"batch of {schedule.batch_size}"
        )
    val_set = ManifestDataset(dataset_root, val_split)

    torch.manual_seed(seed)
    model = build_model(spec)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=schedule.initial_lr)

    sampler_rng = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(
        train_set,
        batch_size=schedule.batch_size,
        shuffle=True,
        generator=sampler_rng,
        num_workers=workers,
        drop_last=True,
    )
    val_loader = DataLoader(val_set, batch_size=schedule.batch_size, num_workers=workers)

    ckpt_path = out / CHECKPOINT_NAME
    log_path = out / LOG_NAME
    train_losses: list[float] = []
    val_curve: list[float] = []

    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        running = 0.0
        batches = 0
        for x, gt in train_loader:
            optimizer.zero_grad()
            flows, _ = model(x)
            loss = multiscale_loss(flows, gt, loss_spec)
            loss.backward()
            optimizer.step()
            running += loss.item()
            batches += 1
        train_losses.append(running / batches)
        val_curve.append(_validation_aee(model, val_loader))

        save_checkpoint(ckpt_path, model, spec, loss_spec, schedule, epoch)
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_HEADER)
            for e, (tl, va) in enumerate(zip(train_losses, val_curve)):
                w.writerow([e, f"{schedule.lr_at(e):.3e}", f"{tl:.6f}", f"{va:.6f}"])
        logger.info(
            "epoch %d: lr %.2e train %.4f val %.4f", epoch, lr, train_losses[-1], val_curve[-1]
        )

    return TrainResult(
        checkpoint=ckpt_path,
        log=log_path,
        train_losses=tuple(train_losses),
        val_aee=tuple(val_curve),
    )
