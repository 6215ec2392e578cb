"""Flat parameter store shared by the layers of one model."""

from __future__ import annotations

import numpy as np


class ParamStore:
    """Named parameters with matching gradient and AdamW moment buffers.

    ``buffers`` holds non-trainable state (batch-norm running statistics);
    it is checkpointed with the parameters but never touched by the optimizer.
    """

    def __init__(self, dtype=np.float32, seed: int = 0):
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.decay: dict[str, bool] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.frozen = False

    def add(self, name: str, value, decay: bool = True) -> str:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        self.decay[name] = decay
        return name

    def add_buffer(self, name: str, value) -> str:
        self.buffers[name] = np.array(value, dtype=self.dtype)
        return name

    def kaiming_uniform(self, shape, fan_in: int) -> np.ndarray:
        bound = np.sqrt(6.0 / fan_in)
        return self.rng.uniform(-bound, bound, size=shape)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def accumulate(self, name: str, grad) -> None:
        if not self.frozen:
            self.grads[name] += grad

    def n_params(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def state(self) -> dict[str, np.ndarray]:
        """Parameters followed by buffers, in registration order."""
        out = dict(self.values)
        out.update(self.buffers)
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            target = self.values.get(name)
            if target is None:
                target = self.buffers.get(name)
            if target is None:
                raise KeyError(f"unknown tensor {name!r} in checkpoint")
            if target.shape != arr.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != model shape {target.shape}")
            target[...] = arr
        missing = set(self.values) | set(self.buffers)
        missing -= set(state)
        if missing:
            raise KeyError(f"checkpoint lacks tensors: {sorted(missing)}")

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state().items()}
