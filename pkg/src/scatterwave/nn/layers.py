"""Layers with hand-written backward passes.

Each layer caches what its backward needs during a training-mode forward
and accumulates parameter gradients into the shared :class:`ParamStore`.
Tensors are NCHW numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import DegenerateInputError, InputError, ShapeError
from .params import ParamStore

# Upper bound on the bytes of one im2col buffer; larger batches are processed in chunks.
COLS_BUDGET = 64 * 2**20


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


class Layer:
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    """Bias-free cross-correlation with a square kernel."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 k: int = 3, stride: int = 1, pad: int | None = None):
        if k not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {k}")
        self.store = store
        self.c_in, self.c_out, self.k, self.stride = c_in, c_out, k, stride
        self.pad = k // 2 if pad is None else pad
        fan_in = c_in * k * k
        self.w = store.add(f"{name}.weight", store.kaiming_uniform((c_out, c_in, k, k), fan_in))
        self._x = None

    def output_shape(self, shape):
        n, _, h, w = shape
        return (n, self.c_out, conv_out_size(h, self.k, self.stride, self.pad),
                conv_out_size(w, self.k, self.stride, self.pad))

    def _chunk(self, x: np.ndarray) -> int:
        _, _, ho, wo = self.output_shape(x.shape)
        per_sample = self.c_in * self.k * self.k * ho * wo * x.itemsize
        return max(1, COLS_BUDGET // max(per_sample, 1))

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(f"conv expects (N, {self.c_in}, H, W), got {x.shape}")
        w2 = self.store.values[self.w].reshape(self.c_out, -1)
        n, _, ho, wo = self.output_shape(x.shape)
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {x.shape} too small for the kernel")
        out = np.empty((n, self.c_out, ho * wo), dtype=np.result_type(x, w2))
        step = self._chunk(x)
        for s in range(0, n, step):
            cols = kernels.im2col(x[s:s + step], self.k, self.stride, self.pad)
            np.matmul(w2, cols, out=out[s:s + step])
        if train:
            self._x = x
        return out.reshape(n, self.c_out, ho, wo)

    def backward(self, dout):
        x = self._x
        w2 = self.store.values[self.w].reshape(self.c_out, -1)
        n = x.shape[0]
        d2 = dout.reshape(n, self.c_out, -1)
        dw = np.zeros_like(w2)
        dx = np.empty(x.shape, dtype=np.result_type(x, dout))
        step = self._chunk(x)
        for s in range(0, n, step):
            cols = kernels.im2col(x[s:s + step], self.k, self.stride, self.pad)
            dw += np.matmul(d2[s:s + step], cols.transpose(0, 2, 1)).sum(axis=0)
            dcols = np.matmul(w2.T, d2[s:s + step])
            dx[s:s + step] = kernels.col2im(dcols, x[s:s + step].shape, self.k, self.stride, self.pad)
        self.store.accumulate(self.w, dw.reshape(self.store.values[self.w].shape))
        self._x = None
        return dx


class BatchNorm2d(Layer):
    def __init__(self, store: ParamStore, name: str, channels: int,
                 eps: float = 1e-5, momentum: float = 0.1):
        self.store = store
        self.eps, self.momentum = eps, momentum
        self.gamma = store.add(f"{name}.gamma", np.ones(channels), decay=False)
        self.beta = store.add(f"{name}.beta", np.zeros(channels), decay=False)
        self.mean = store.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.var = store.add_buffer(f"{name}.running_var", np.ones(channels))
        self._cache = None

    def forward(self, x, train=False):
        gamma = self.store.values[self.gamma][None, :, None, None]
        beta = self.store.values[self.beta][None, :, None, None]
        if not train:
            mean = self.store.buffers[self.mean][None, :, None, None]
            var = self.store.buffers[self.var][None, :, None, None]
            return (x - mean) / np.sqrt(var + self.eps) * gamma + beta
        n, c, h, w = x.shape
        m = n * h * w
        if m == 1:
            raise DegenerateInputError("batch norm in training mode needs more than one value per channel")
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        xc = x - mean
        var = np.mean(xc * xc, axis=(0, 2, 3), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv_std
        # running variance uses the unbiased batch estimate
        mom = self.momentum
        run_mean = self.store.buffers[self.mean]
        run_var = self.store.buffers[self.var]
        run_mean *= 1 - mom
        run_mean += mom * mean.ravel()
        run_var *= 1 - mom
        run_var += mom * var.ravel() * (m / (m - 1))
        self._cache = (xhat, inv_std)
        return xhat * gamma + beta

    def backward(self, dout):
        xhat, inv_std = self._cache
        gamma = self.store.values[self.gamma][None, :, None, None]
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        dbeta = dout.sum(axis=(0, 2, 3))
        dgamma = (dout * xhat).sum(axis=(0, 2, 3))
        self.store.accumulate(self.beta, dbeta)
        self.store.accumulate(self.gamma, dgamma)
        dx = (gamma * inv_std / m) * (m * dout - dbeta[None, :, None, None]
                                      - xhat * dgamma[None, :, None, None])
        self._cache = None
        return dx


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        dx = dout * self._mask
        self._mask = None
        return dx


class GlobalAvgPool(Layer):
    """Average each channel over its spatial extent: (N, C, H, W) -> (N, C)."""

    def __init__(self):
        self._shape = None

    def forward(self, x, train=False):
        if train:
            self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._shape
        return np.broadcast_to((dout / (h * w))[:, :, None, None], self._shape).copy()


class Linear(Layer):
    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int):
        self.store = store
        self.d_in, self.d_out = d_in, d_out
        self.w = store.add(f"{name}.weight", store.kaiming_uniform((d_out, d_in), d_in))
        bound = 1.0 / np.sqrt(d_in)
        self.b = store.add(f"{name}.bias", store.rng.uniform(-bound, bound, d_out), decay=False)
        self._x = None

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"linear layer expects (N, {self.d_in}), got {x.shape}")
        if train:
            self._x = x
        return x @ self.store.values[self.w].T + self.store.values[self.b]

    def backward(self, dout):
        self.store.accumulate(self.w, dout.T @ self._x)
        self.store.accumulate(self.b, dout.sum(axis=0))
        self._x = None
        return dout @ self.store.values[self.w]


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} disagree")
    b, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c or not np.issubdtype(labels.dtype, np.integer)):
        raise InputError(f"labels must be integers in [0, {c})")
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(b)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    grad /= b
    return loss, grad.astype(logits.dtype, copy=False)
