"""Training loop with plateau-driven learning-rate decay and early stop.

The learning rate starts at 1e-4 and is multiplied by 0.8 (floored at
1e-7) after every epoch whose validation loss fails to improve on the
best seen so far; five consecutive such epochs stop the run.  Batch
order depends only on (seed, epoch), never on the model, so runs that
differ only in architecture see identical data sequences.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .errors import ConfigError, NonFiniteLossError
from .loss import LossConfig, perceptual_loss
from .network import PlateSrNet
from .ocr import OcrAdapter


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    plateau_factor: float = 0.8
    lr_min: float = 1e-7
    plateau_patience: int = 1
    early_stop_patience: int = 5
    batch_size: int = 16
    max_epochs: int = 100
    seed: int = 0
    improve_tol: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError(f"plateau_factor must be in (0, 1), got {self.plateau_factor}")
        if not 0.0 < self.lr_min <= self.lr0:
            raise ConfigError(f"need 0 < lr_min <= lr0, got {self.lr_min}")
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.early_stop_patience < 1:
            raise ConfigError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.improve_tol < 0:
            raise ConfigError(f"improve_tol must be >= 0, got {self.improve_tol}")
        self.loss.validate()


class PlateauScheduler:
    """Tracks best validation loss; decays on plateau, signals early stop.

    ``observe`` is called once per epoch with that epoch's validation
    loss and returns ``(lr for the next epoch, should_stop)``.
    """

    def __init__(
        self,
        lr0: float,
        factor: float,
        lr_min: float,
        plateau_patience: int,
        early_stop_patience: int,
        improve_tol: float = 1e-8,
    ):
        self.lr = float(lr0)
        self.factor = float(factor)
        self.lr_min = float(lr_min)
        self.plateau_patience = int(plateau_patience)
        self.early_stop_patience = int(early_stop_patience)
        self.improve_tol = float(improve_tol)
        self.best: float = float("inf")
        self.stale_epochs = 0

    def observe(self, val_loss: float) -> tuple[float, bool]:
        if val_loss < self.best - self.improve_tol:
            self.best = float(val_loss)
            self.stale_epochs = 0
        else:
            self.stale_epochs += 1
            if self.stale_epochs >= self.plateau_patience:
                self.lr = max(self.lr * self.factor, self.lr_min)
        return self.lr, self.stale_epochs >= self.early_stop_patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    wall_seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stop_reason: str = ""


# Wall time stays off disk so rerunning with the same inputs is byte-identical.
LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "lr")


def write_log_csv(log: TrainLog, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for rec in log.epochs:
            writer.writerow(
                [rec.epoch, repr(rec.train_loss), repr(rec.val_loss), repr(rec.lr)]
            )


def batch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample permutation for one epoch; depends only on (seed, epoch, n)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)])).permutation(n)


def _stack_pairs(pairs: Sequence) -> tuple[torch.Tensor, torch.Tensor]:
    lrs, hrs = [], []
    for item in pairs:
        if hasattr(item, "lr") and hasattr(item, "hr"):
            lr, hr = item.lr, item.hr
        else:
            lr, hr = item
        lrs.append(torch.as_tensor(np.ascontiguousarray(lr)).float())
        hrs.append(torch.as_tensor(np.ascontiguousarray(hr)).float())
    return torch.stack(lrs), torch.stack(hrs)


def evaluate_epoch(
    network: PlateSrNet,
    pairs: Sequence,
    ocr: OcrAdapter,
    loss_cfg: Optional[LossConfig] = None,
    batch_size: int = 16,
) -> float:
    """Mean perceptual loss over a dataset; no parameters are touched."""
    if not pairs:
        raise ConfigError("evaluate_epoch needs at least one pair")
    lr_all, hr_all = _stack_pairs(pairs)
    was_training = network.training
    network.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            lr_b = lr_all[start : start + batch_size]
            hr_b = hr_all[start : start + batch_size]
            sr_b = network(lr_b)
            breakdown = perceptual_loss(sr_b, hr_b, ocr, loss_cfg)
            total += breakdown.scalar() * len(lr_b)
            count += len(lr_b)
    if was_training:
        network.train()
    return total / count


def train(
    network: PlateSrNet,
    train_pairs: Sequence,
    val_pairs: Sequence,
    ocr: OcrAdapter,
    cfg: Optional[TrainConfig] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[dict[str, torch.Tensor], TrainLog]:
    """Optimize with Adam under the plateau schedule.

    Returns the state dict of the best-validation epoch (also loaded back
    into ``network``) and the per-epoch log.  Raises
    :class:`NonFiniteLossError` the moment a loss stops being finite.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not train_pairs:
        raise ConfigError("no training pairs")
    if not val_pairs:
        raise ConfigError("no validation pairs")

    lr_all, hr_all = _stack_pairs(train_pairs)
    n = lr_all.shape[0]
    optimizer = torch.optim.Adam(network.parameters(), lr=cfg.lr0)
    scheduler = PlateauScheduler(
        cfg.lr0,
        cfg.plateau_factor,
        cfg.lr_min,
        cfg.plateau_patience,
        cfg.early_stop_patience,
        cfg.improve_tol,
    )
    log = TrainLog()
    best_state: dict[str, torch.Tensor] = {
        k: v.detach().clone() for k, v in network.state_dict().items()
    }
    current_lr = cfg.lr0
    stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.monotonic()
        for group in optimizer.param_groups:
            group["lr"] = current_lr
        network.train()
        perm = batch_order(cfg.seed, epoch, n)
        epoch_total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(perm[start : start + cfg.batch_size].copy())
            lr_b, hr_b = lr_all[idx], hr_all[idx]
            sr_b = network(lr_b)
            breakdown = perceptual_loss(sr_b, hr_b, ocr, cfg.loss)
            value = breakdown.scalar()
            if not np.isfinite(value):
                raise NonFiniteLossError(
                    f"epoch {epoch}, batch at {start}: loss {value} "
                    f"(mse {breakdown.mse}, details {breakdown.details})"
                )
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            epoch_total += value * len(idx)
        val_loss = evaluate_epoch(network, val_pairs, ocr, cfg.loss, cfg.batch_size)
        if not np.isfinite(val_loss):
            raise NonFiniteLossError(f"epoch {epoch}: validation loss {val_loss}")
        record = EpochRecord(
            epoch=epoch,
            train_loss=epoch_total / n,
            val_loss=val_loss,
            lr=current_lr,
            wall_seconds=time.monotonic() - t0,
        )
        log.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val_loss < log.best_val_loss - cfg.improve_tol:
            log.best_val_loss = val_loss
            log.best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in network.state_dict().items()}
        current_lr, should_stop = scheduler.observe(val_loss)
        if should_stop:
            stop_reason = "early_stop"
            break
    log.stop_reason = stop_reason
    network.load_state_dict(best_state)
    return best_state, log
