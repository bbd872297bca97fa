"""Training loop: seeded 90/10 split, batch size 1, Adam with binary
cross-entropy, at most 50 epochs with early stopping on validation loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .data import DatasetTooSmall, TrainSample
from .unet import UNet, build_unet

MAX_EPOCHS = 50
VALIDATION_FRACTION = 0.10
DEFAULT_PATIENCE = 5
DEFAULT_LR = 1e-3


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_iou: float
    val_iou: float


@dataclass
class TrainRun:
    epochs_completed: int
    history: list[EpochStats] = field(default_factory=list)
    stop_reason: str = "max_epochs"  # or "early_stop"
    best_val_loss: float = float("inf")
    best_epoch: int = 0

    def write_curves(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "train_iou", "val_iou"])
            for row in self.history:
                writer.writerow(
                    [
                        row.epoch,
                        f"{row.train_loss:.6f}",
                        f"{row.val_loss:.6f}",
                        f"{row.train_iou:.6f}",
                        f"{row.val_iou:.6f}",
                    ]
                )


def _to_tensors(sample: TrainSample):
    x = torch.from_numpy(sample.image).unsqueeze(0).unsqueeze(0)
    y = torch.from_numpy(sample.label.astype(np.float32)).unsqueeze(0).unsqueeze(0)
    return x, y


def _binary_iou(pred: torch.Tensor, target: torch.Tensor) -> float:
    p = pred > 0.5
    t = target > 0.5
    union = (p | t).sum().item()
    if union == 0:
        return 1.0
    return (p & t).sum().item() / union


def split_dataset(
    samples: list[TrainSample], seed: int
) -> tuple[list[TrainSample], list[TrainSample]]:
    """Seeded shuffle, then a 90/10 train/validation split."""
    if len(samples) < 2:
        raise DatasetTooSmall("need at least 2 samples for a train/validation split")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = max(1, round(VALIDATION_FRACTION * len(samples)))
    val_idx = set(order[:n_val].tolist())
    train = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val = [samples[i] for i in sorted(val_idx)]
    return train, val


def train(
    samples: list[TrainSample],
    class_kind: str,
    seed: int = 0,
    base_channels: int = 64,
    max_epochs: int = MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    lr: float = DEFAULT_LR,
    checkpoint_path: Optional[str] = None,
) -> tuple[TrainRun, UNet]:
    """Train one segmentation model and return the run log plus the model
    restored to its best-validation state."""
    if max_epochs > MAX_EPOCHS:
        raise ValueError(f"max_epochs is capped at {MAX_EPOCHS}")
    samples = [s for s in samples if s.class_kind == class_kind]
    train_set, val_set = split_dataset(samples, seed)

    torch.manual_seed(seed)
    model = build_unet(base_channels)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    run = TrainRun(epochs_completed=0)
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    epochs_since_best = 0
    step_rng = np.random.default_rng(seed + 1)

    for epoch in range(1, max_epochs + 1):
        model.train()
        train_losses = []
        train_ious = []
        for i in step_rng.permutation(len(train_set)):
            x, y = _to_tensors(train_set[i])
            optimizer.zero_grad()
            pred = model(x)
            loss = F.binary_cross_entropy(pred, y)
            loss.backward()
            optimizer.step()
            train_losses.append(loss.item())
            train_ious.append(_binary_iou(pred.detach(), y))

        model.eval()
        val_losses = []
        val_ious = []
        with torch.no_grad():
            for sample in val_set:
                x, y = _to_tensors(sample)
                pred = model(x)
                val_losses.append(F.binary_cross_entropy(pred, y).item())
                val_ious.append(_binary_iou(pred, y))

        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(train_losses)),
            val_loss=float(np.mean(val_losses)),
            train_iou=float(np.mean(train_ious)),
            val_iou=float(np.mean(val_ious)),
        )
        run.history.append(stats)
        run.epochs_completed = epoch

        if stats.val_loss < run.best_val_loss:
            run.best_val_loss = stats.val_loss
            run.best_epoch = epoch
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= patience:
                run.stop_reason = "early_stop"
                break
    else:
        run.stop_reason = "max_epochs"

    model.load_state_dict(best_state)
    if checkpoint_path:
        torch.save(
            {"state_dict": model.state_dict(), "base_channels": base_channels},
            checkpoint_path,
        )
    return run, model


def overfit_single(
    sample: TrainSample,
    base_channels: int = 8,
    max_steps: int = 200,
    target_loss: float = 0.1,
    lr: float = 3e-3,
    seed: int = 0,
) -> list[float]:
    """Sanity oracle: repeatedly fit one sample; returns the loss trace.

    A healthy network/optimizer/loss wiring drives training loss under
    ``target_loss`` well before ``max_steps``; the loop stops early once
    it does.
    """
    torch.manual_seed(seed)
    model = build_unet(base_channels)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    x, y = _to_tensors(sample)
    losses = []
    model.train()
    for _ in range(max_steps):
        optimizer.zero_grad()
        loss = F.binary_cross_entropy(model(x), y)
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        if losses[-1] < target_loss:
            break
    return losses
