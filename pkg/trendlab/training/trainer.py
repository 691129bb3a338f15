"""
Mini-batch training loop with plateau LR halving and early stopping.

Each epoch reshuffles with ``default_rng([seed, epoch])`` so a run is fully
determined by its seed. The last short batch is kept. After every epoch the
validation MSE decides whether the epoch counts as an improvement (strictly
lower by at least ``improvement_tolerance``); both the scheduler and the
early-stop counters reset on improvement and otherwise advance together.
At the end the best parameters are loaded back into the model.
"""

from __future__ import annotations

import io
import logging
import math
import time
from typing import Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from trendlab.core import functional as F
from trendlab.core.tensor import Tape, Tensor
from trendlab.data.series_io import WindowedDataset
from trendlab.errors import InsufficientDataError, NonFiniteGradientError, TrainingAbortedError
from trendlab.models.base import Forecaster
from trendlab.training.optim import Adam, clip_gradients

logger = logging.getLogger(__name__)

StopReason = Literal["early_stop", "max_epochs", "no_parameters"]


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-4, gt=0)
    batch_size: int = Field(default=16, ge=1)
    max_epochs: int = Field(default=200, ge=1)
    early_stop_patience: int = Field(default=30, ge=1)
    clip_max_norm: float = Field(default=1.0, gt=0)
    scheduler_factor: float = Field(default=0.5, gt=0, lt=1)
    scheduler_patience: int = Field(default=10, ge=1)
    improvement_tolerance: float = Field(default=1e-9, ge=0)
    seed: int = 0

    @classmethod
    def for_model(cls, kind: str, **overrides) -> "TrainConfig":
        """Defaults for ``kind``: xLSTM-TS uses batch 16 / patience 30, the others 256 / 10."""
        base = {} if kind == "xlstm_ts" else {"batch_size": 256, "early_stop_patience": 10}
        base.update(overrides)
        return cls(**base)


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


class TrainReport(BaseModel):
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: StopReason = "max_epochs"
    wall_clock_seconds: float = 0.0

    def to_csv(self) -> str:
        """``epoch,train_loss,val_loss,lr`` rows; floats at full precision."""
        frame = pd.DataFrame([record.model_dump() for record in self.epochs],
                             columns=["epoch", "train_loss", "val_loss", "lr"])
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
        return buffer.getvalue()

    def summary(self) -> Dict[str, object]:
        """Deterministic fields only."""
        return self.model_dump(exclude={"epochs", "wall_clock_seconds"})


class FitResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    report: TrainReport
    best_state: Dict[str, np.ndarray]


def _batch_tensors(data: WindowedDataset, idx: np.ndarray):
    return Tensor(data.inputs[idx][..., None]), Tensor(data.targets[idx][:, None])


def validation_loss(model: Forecaster, data: WindowedDataset, batch_size: int) -> float:
    predictions = model.predict(data.inputs, batch_size=batch_size)
    return float(np.mean((predictions - data.targets) ** 2))


def _train_epoch(model: Forecaster, optimiser: Adam, data: WindowedDataset, config: TrainConfig,
                 epoch: int, last_good: Dict[str, np.ndarray]) -> float:
    model.train()
    order = np.random.default_rng([config.seed, epoch]).permutation(len(data))
    total = 0.0
    for start in range(0, order.size, config.batch_size):
        idx = order[start:start + config.batch_size]
        x, y = _batch_tensors(data, idx)
        optimiser.zero_grad()
        with Tape() as tape:
            loss = F.mse(model(x), y)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingAbortedError(
                f"loss became {value} at epoch {epoch}, batch starting at {start}",
                last_good_state=last_good, epoch=epoch)
        tape.backward(loss)
        clip_gradients(optimiser.params, config.clip_max_norm)
        try:
            optimiser.step()
        except NonFiniteGradientError as exc:
            raise TrainingAbortedError(f"epoch {epoch}: {exc}", last_good_state=last_good, epoch=epoch) from exc
        total += value * idx.size
    return total / order.size


def fit(model: Forecaster, train: WindowedDataset, val: WindowedDataset, config: TrainConfig,
        max_epochs: Optional[int] = None) -> FitResult:
    """Train ``model`` in place and leave it holding the lowest-validation-loss parameters."""
    if len(train) == 0 or len(val) == 0:
        raise InsufficientDataError(f"training needs non-empty datasets (train={len(train)}, val={len(val)})")
    epochs_allowed = max_epochs if max_epochs is not None else config.max_epochs
    started = time.perf_counter()
    report = TrainReport()

    if not model.parameters():
        report.best_val_loss = validation_loss(model, val, config.batch_size)
        report.stop_reason = "no_parameters"
        report.wall_clock_seconds = time.perf_counter() - started
        logger.info("%s has no parameters; validation MSE %.6g", model.kind, report.best_val_loss)
        return FitResult(report=report, best_state=model.state_dict())

    optimiser = Adam(model.parameters(), lr=config.learning_rate)
    best_state = model.state_dict()
    since_best = 0
    since_lr_change = 0

    for epoch in range(1, epochs_allowed + 1):
        train_loss = _train_epoch(model, optimiser, train, config, epoch, best_state)
        val_loss = validation_loss(model, val, config.batch_size)
        if not math.isfinite(val_loss):
            raise TrainingAbortedError(f"validation loss became {val_loss} at epoch {epoch}",
                                       last_good_state=best_state, epoch=epoch)
        report.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=optimiser.lr))
        report.stopped_epoch = epoch
        logger.info("epoch %d/%d train %.6g val %.6g lr %.3g",
                    epoch, epochs_allowed, train_loss, val_loss, optimiser.lr)

        if val_loss < report.best_val_loss - config.improvement_tolerance:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_state = model.state_dict()
            since_best = 0
            since_lr_change = 0
            continue

        since_best += 1
        since_lr_change += 1
        if since_lr_change >= config.scheduler_patience:
            optimiser.lr *= config.scheduler_factor
            since_lr_change = 0
            logger.info("validation loss flat for %d epochs; learning rate now %.3g",
                        config.scheduler_patience, optimiser.lr)
        if since_best >= config.early_stop_patience:
            report.stop_reason = "early_stop"
            logger.info("early stop at epoch %d (best epoch %d, val %.6g)",
                        epoch, report.best_epoch, report.best_val_loss)
            break

    model.load_state_dict(best_state)
    report.wall_clock_seconds = time.perf_counter() - started
    return FitResult(report=report, best_state=best_state)
