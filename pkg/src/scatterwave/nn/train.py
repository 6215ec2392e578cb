"""Mini-batch training loop with AdamW and plateau scheduling."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import CorpusError, NumericError, ParameterError
from .layers import cross_entropy
from .optim import AdamWConfig, PlateauScheduler, adamw_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    patience: int = 10
    factor: float = 0.5
    min_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ParameterError("lr and weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be positive and epochs non-negative")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.history[-1].train_loss if self.history else math.nan


def accuracy(model, x, y, batch_size: int = 256) -> float:
    if len(y) == 0:
        return math.nan
    pred = model.predict_logits(x, batch_size).argmax(axis=1)
    return float(np.mean(pred == np.asarray(y)))


def train(model, x_train, y_train, x_val=None, y_val=None, cfg: TrainConfig = TrainConfig(),
          callback=None) -> TrainResult:
    """Train ``model`` in place.

    Validation data only feeds the scheduler and the log.  When it is absent,
    the scheduler watches the negated training loss instead.
    """
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train)
    if len(y_train) == 0:
        raise CorpusError("training split is empty")
    if len(x_train) != len(y_train):
        raise ParameterError(f"{len(x_train)} training inputs but {len(y_train)} labels")
    has_val = x_val is not None and y_val is not None and len(y_val) > 0
    opt = AdamWConfig(lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(cfg.lr, cfg.patience, cfg.factor, min_lr=cfg.min_lr)
    rng = np.random.default_rng(cfg.seed)
    n = len(y_train)
    result = TrainResult()
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        lr = sched.lr if cfg.lr > 0 else 0.0
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            model.store.zero_grad()
            loss, dlogits = cross_entropy(model.forward(xb, train=True), yb)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            model.backward(dlogits)
            adamw_step(model.store, opt, lr)
            total += loss * len(idx)
            seen += len(idx)
        train_loss = total / seen
        val_acc = accuracy(model, x_val, y_val) if has_val else math.nan
        rec = EpochRecord(epoch, train_loss, val_acc, lr)
        result.history.append(rec)
        if cfg.lr > 0:
            sched.step(val_acc if has_val else -train_loss)
        log.debug("epoch %d loss %.5f val_acc %.4f lr %.2e", epoch, train_loss, val_acc, lr)
        if callback is not None:
            callback(rec)
    result.seconds = time.perf_counter() - t0
    return result
