"""ResNet and MLP classifiers built from :mod:`scatterwave.nn.layers`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, ReLU, Sequential
from .params import ParamStore


class ResidualBlock(Layer):
    """``relu(bn(conv(relu(bn(conv(x))))) + shortcut(x))``.

    The shortcut is the identity when shapes agree, otherwise a strided 1x1
    convolution followed by batch norm.
    """

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, stride: int = 1):
        self.branch = Sequential(
            Conv2d(store, f"{name}.conv1", c_in, c_out, 3, stride),
            BatchNorm2d(store, f"{name}.bn1", c_out),
            ReLU(),
            Conv2d(store, f"{name}.conv2", c_out, c_out, 3, 1),
            BatchNorm2d(store, f"{name}.bn2", c_out),
        )
        if c_in == c_out and stride == 1:
            self.shortcut = None
        else:
            self.shortcut = Sequential(
                Conv2d(store, f"{name}.proj", c_in, c_out, 1, stride, pad=0),
                BatchNorm2d(store, f"{name}.proj_bn", c_out),
            )
        self.relu = ReLU()

    def forward(self, x, train=False):
        skip = x if self.shortcut is None else self.shortcut.forward(x, train)
        return self.relu.forward(self.branch.forward(x, train) + skip, train)

    def backward(self, dout):
        d = self.relu.backward(dout)
        dx = self.branch.backward(d)
        if self.shortcut is None:
            return dx + d
        return dx + self.shortcut.backward(d)


@dataclass(frozen=True)
class ResNetSpec:
    n_classes: int
    in_channels: int = 1
    stem_channels: int = 16
    widths: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: int = 2


def count_params(spec: ResNetSpec) -> int:
    """Closed-form trainable parameter count (independent of input size)."""
    total = spec.in_channels * spec.stem_channels * 9 + 2 * spec.stem_channels
    c = spec.stem_channels
    for width in spec.widths:
        for _ in range(spec.blocks_per_stage):
            total += c * width * 9 + width * width * 9 + 4 * width
            if c != width:
                total += c * width + 2 * width
            c = width
    return total + c * spec.n_classes + spec.n_classes


class Classifier(Layer):
    """A network plus the parameter store that owns its weights."""

    store: ParamStore
    net: Layer

    def forward(self, x, train=False):
        return self.net.forward(x, train)

    def backward(self, dlogits):
        return self.net.backward(dlogits)

    def n_params(self) -> int:
        return self.store.n_params()

    def predict_logits(self, x, batch_size: int = 256) -> np.ndarray:
        """Eval-mode logits, computed in batches."""
        x = np.asarray(x, dtype=self.store.dtype)
        outs = [self.forward(x[s:s + batch_size], train=False) for s in range(0, len(x), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0, self.n_outputs), self.store.dtype)


class ResNet(Classifier):
    """Stem conv, residual stages, global average pooling, linear head.

    Stages after the first halve the spatial size with a stride-2 first block,
    so any input of at least 1x1 is accepted without changing the weights.
    """

    def __init__(self, spec: ResNetSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.store = ParamStore(dtype, seed)
        layers: list[Layer] = [
            Conv2d(self.store, "stem.conv", spec.in_channels, spec.stem_channels, 3, 1),
            BatchNorm2d(self.store, "stem.bn", spec.stem_channels),
            ReLU(),
        ]
        c = spec.stem_channels
        for i, width in enumerate(spec.widths):
            for b in range(spec.blocks_per_stage):
                stride = 2 if (b == 0 and c != width) else 1
                layers.append(ResidualBlock(self.store, f"stage{i}.block{b}", c, width, stride))
                c = width
        layers += [GlobalAvgPool(), Linear(self.store, "fc", c, spec.n_classes)]
        self.net = Sequential(*layers)
        self.n_outputs = spec.n_classes

    def forward(self, x, train=False):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[:, None]
        return self.net.forward(x.astype(self.store.dtype, copy=False), train)


class MLP(Classifier):
    """Fully connected net ``dims[0] -> ... -> dims[-1]`` with ReLU between layers."""

    def __init__(self, dims=(64, 256, 128, 32), seed: int = 0, dtype=np.float32):
        self.dims = tuple(int(d) for d in dims)
        self.store = ParamStore(dtype, seed)
        layers: list[Layer] = []
        for i, (a, b) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            if i:
                layers.append(ReLU())
            layers.append(Linear(self.store, f"fc{i}", a, b))
        self.net = Sequential(*layers)
        self.n_outputs = self.dims[-1]

    def forward(self, x, train=False):
        return self.net.forward(np.asarray(x).astype(self.store.dtype, copy=False), train)
