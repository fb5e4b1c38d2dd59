"""Minimal dense/conv network engine with reverse-mode gradients.

Layers operate on NHWC float arrays and cache what backward needs during
a train-mode forward. Hot loops (convolution, pooling) are delegated to
``boweldet.kernels`` so they run through either the numba or the numpy
backend.
"""

import numpy as np

from boweldet import kernels
from boweldet.errors import ShapeError, StateError


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)


class Layer:
    def params(self) -> list:
        return []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Conv2d(Layer):
    """Stride-1 cross-correlation with bias on NCHW input; padding 'same'
    or 'valid'."""

    def __init__(self, in_channels, out_channels, kernel=(3, 3), padding="same"):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        self.padding = padding
        if padding == "same":
            if kernel[0] % 2 == 0 or kernel[1] % 2 == 0:
                raise ShapeError("'same' padding needs odd kernel sides")
            self.pad = ((kernel[0] - 1) // 2, (kernel[1] - 1) // 2)
        elif padding == "valid":
            self.pad = (0, 0)
        else:
            self.pad = tuple(padding)
        self.weight = Param(np.zeros((out_channels, in_channels, *self.kernel), np.float32))
        self.bias = Param(np.zeros(out_channels, np.float32))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"conv2d expects (N,{self.in_channels},H,W), got {x.shape}")
        oh = x.shape[2] + 2 * self.pad[0] - self.kernel[0] + 1
        ow = x.shape[3] + 2 * self.pad[1] - self.kernel[1] + 1
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"conv2d kernel {self.kernel} larger than padded input {x.shape}")
        self._x = x if train else None
        return kernels.conv2d_forward(np.ascontiguousarray(x), self.weight.value,
                                      self.bias.value, *self.pad)

    def backward(self, dy, need_dx=True):
        if self._x is None:
            raise StateError("conv2d backward before train-mode forward")
        x = self._x
        dy = np.ascontiguousarray(dy)
        self.bias.grad += dy.sum(axis=(0, 2, 3))
        self.weight.grad += kernels.conv2d_backward_weights(x, dy, *self.kernel, *self.pad)
        if not need_dx:
            return None
        return kernels.conv2d_backward_input(dy, self.weight.value,
                                             x.shape[2], x.shape[3], *self.pad)

    def spec(self):
        return {"kind": "conv2d", "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel": list(self.kernel),
                "padding": self.padding}


class Dense(Layer):
    def __init__(self, in_units, out_units):
        self.in_units = in_units
        self.out_units = out_units
        self.weight = Param(np.zeros((in_units, out_units), np.float32))
        self.bias = Param(np.zeros(out_units, np.float32))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_units:
            raise ShapeError(f"dense expects (N,{self.in_units}), got {x.shape}")
        self._x = x if train else None
        return x @ self.weight.value + self.bias.value

    def backward(self, dy):
        if self._x is None:
            raise StateError("dense backward before train-mode forward")
        self.weight.grad += self._x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value.T

    def spec(self):
        return {"kind": "dense", "in_units": self.in_units, "out_units": self.out_units}


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0 if train else None
        return np.maximum(x, 0)

    def backward(self, dy):
        if self._mask is None:
            raise StateError("relu backward before train-mode forward")
        return dy * self._mask

    def spec(self):
        return {"kind": "relu"}


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, train=False, rng=None):
        y = _sigmoid(x)
        self._y = y if train else None
        return y

    def backward(self, dy):
        if self._y is None:
            raise StateError("sigmoid backward before train-mode forward")
        return dy * self._y * (1.0 - self._y)

    def spec(self):
        return {"kind": "sigmoid"}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Dropout(Layer):
    """Inverted dropout: active only in train mode, identity in eval."""

    def __init__(self, p):
        if not (0.0 <= p < 1.0):
            raise ShapeError(f"dropout p must be in [0,1), got {p}")
        self.p = p
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = np.broadcast_to(np.ones(1, x.dtype), x.shape) if train else None
            return x
        if rng is None:
            raise StateError("dropout in train mode needs an rng")
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        self._mask = keep
        return x * keep

    def backward(self, dy):
        if self._mask is None:
            raise StateError("dropout backward before train-mode forward")
        return dy * self._mask

    def spec(self):
        return {"kind": "dropout", "p": self.p}


class MaxPool2d(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    full window are dropped."""

    def __init__(self, pool=(2, 2)):
        self.pool = tuple(pool)
        self._ctx = None

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"maxpool2d expects NCHW, got {x.shape}")
        if x.shape[2] < self.pool[0] or x.shape[3] < self.pool[1]:
            raise ShapeError(f"maxpool2d window {self.pool} larger than input {x.shape}")
        out, idx = kernels.maxpool2d_forward(np.ascontiguousarray(x), *self.pool)
        self._ctx = (idx, x.shape) if train else None
        return out

    def backward(self, dy):
        if self._ctx is None:
            raise StateError("maxpool2d backward before train-mode forward")
        idx, x_shape = self._ctx
        return kernels.maxpool2d_backward(np.ascontiguousarray(dy), idx, x_shape)

    def spec(self):
        return {"kind": "maxpool2d", "pool": list(self.pool)}


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        if self._shape is None:
            raise StateError("flatten backward before train-mode forward")
        return dy.reshape(self._shape)

    def spec(self):
        return {"kind": "flatten"}


class IntervalHead(Layer):
    """Maps two linear units to (offset, scale): 0.5*tanh for the offset
    so it stays in [-0.5, 0.5], sigmoid for the scale in (0, 1)."""

    def __init__(self):
        self._ctx = None

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != 2:
            raise ShapeError(f"interval head expects (N,2), got {x.shape}")
        th = np.tanh(x[:, 0])
        sg = _sigmoid(x[:, 1])
        self._ctx = (th, sg) if train else None
        return np.stack([0.5 * th, sg], axis=1)

    def backward(self, dy):
        if self._ctx is None:
            raise StateError("interval head backward before train-mode forward")
        th, sg = self._ctx
        dx = np.empty_like(dy)
        dx[:, 0] = dy[:, 0] * 0.5 * (1.0 - th * th)
        dx[:, 1] = dy[:, 1] * sg * (1.0 - sg)
        return dx

    def spec(self):
        return {"kind": "interval_head"}


LAYER_KINDS = {
    "conv2d": Conv2d,
    "dense": Dense,
    "relu": ReLU,
    "sigmoid": Sigmoid,
    "dropout": Dropout,
    "maxpool2d": MaxPool2d,
    "flatten": Flatten,
    "interval_head": IntervalHead,
}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec["kind"]
    if kind not in LAYER_KINDS:
        raise ShapeError(f"unknown layer kind {kind!r}")
    kwargs = {k: v for k, v in spec.items() if k != "kind"}
    if "kernel" in kwargs:
        kwargs["kernel"] = tuple(kwargs["kernel"])
    if "pool" in kwargs:
        kwargs["pool"] = tuple(kwargs["pool"])
    return LAYER_KINDS[kind](**kwargs)


class Network:
    def __init__(self, layers: list):
        self.layers = layers

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grads(self) -> None:
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x, train=False, rng=None):
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train=train, rng=rng)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.spec()['kind']}): {exc}") from None
        return x

    def backward(self, dy):
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            try:
                if i == 0 and isinstance(layer, Conv2d):
                    # nothing consumes the gradient w.r.t. the network input
                    dy = layer.backward(dy, need_dx=False)
                else:
                    dy = layer.backward(dy)
            except StateError as exc:
                raise StateError(f"layer {i} ({layer.spec()['kind']}): {exc}") from None
        return dy

    def layer_specs(self) -> list:
        return [layer.spec() for layer in self.layers]

    def param_count(self) -> int:
        return int(sum(p.value.size for p in self.params()))
