"""AdamW and reduce-on-plateau learning-rate scheduling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .params import ParamStore


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-2
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adamw_step(store: ParamStore, cfg: AdamWConfig, lr: float | None = None) -> None:
    """One AdamW update of every parameter in ``store`` using its gradients.

    Weight decay is decoupled (``theta -= lr * wd * theta``) and skipped for
    parameters registered with ``decay=False`` (biases, batch-norm affine).
    """
    lr = cfg.lr if lr is None else lr
    store.step += 1
    t = store.step
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, theta in store.values.items():
        g = store.grads[name]
        m, v = store.m[name], store.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if store.decay[name] and cfg.weight_decay:
            theta *= 1.0 - lr * cfg.weight_decay
        theta -= (lr / c1) * m / (np.sqrt(v / c2) + cfg.eps)


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    The monitored metric is maximized; an epoch counts as an improvement when
    it beats the best value so far by at least ``threshold``.
    """

    def __init__(self, lr: float, patience: int = 10, factor: float = 0.5,
                 threshold: float = 1e-4, min_lr: float = 1e-6):
        if not 0 < factor < 1:
            raise ParameterError(f"plateau factor must lie in (0, 1), got {factor}")
        if patience < 1:
            raise ParameterError("patience must be at least 1")
        self.lr = lr
        self.patience, self.factor = patience, factor
        self.threshold, self.min_lr = threshold, min_lr
        self.best = -np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric >= self.best + self.threshold:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
        return self.lr


def plateau_schedule(history, lr: float, patience: int = 10, factor: float = 0.5,
                     threshold: float = 1e-4, min_lr: float = 1e-6) -> float:
    """Learning rate after replaying a metric history through :class:`PlateauScheduler`."""
    sched = PlateauScheduler(lr, patience, factor, threshold, min_lr)
    for value in history:
        sched.step(value)
    return sched.lr
