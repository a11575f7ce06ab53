"""Runtime layers: parameters, forward passes, exact backward passes.

Each layer caches what its backward pass needs during a train-mode
forward; backward consumes and clears that cache. Weights use uniform
Glorot initialization from the builder's seeded generator, biases zero.
"""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..errors import StateError
from . import specs


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return kernels.sigmoid(z)
    return z


def _activation_grad(name: str, out: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation output
    if name == "relu":
        return (out > 0.0).astype(out.dtype)
    if name == "sigmoid":
        return out * (1.0 - out)
    return np.ones_like(out)


class Layer:
    """Base runtime layer; parameter-free layers inherit the defaults."""

    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray, train: bool, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def param_names(self) -> list[str]:
        return []

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a "
                             "train-mode forward")
        cache, self._cache = self._cache, None
        return cache


class DenseLayer(Layer):
    def __init__(self, spec: specs.Dense, in_shape, rng):
        super().__init__()
        d, u = in_shape[0], spec.units
        self.activation = spec.activation
        self.w = _glorot(rng, d, u, (d, u))
        self.b = np.zeros(u)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def forward(self, x, train, rng=None):
        out = _activate(self.activation, x @ self.w + self.b)
        if train:
            self._cache = (x, out)
        return out

    def backward(self, grad):
        x, out = self._take_cache()
        gz = grad * _activation_grad(self.activation, out)
        self.gw = x.T @ gz
        self.gb = gz.sum(axis=0)
        return gz @ self.w.T

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def param_names(self):
        return ["w", "b"]


class Conv1DLayer(Layer):
    def __init__(self, spec: specs.Conv1D, in_shape, rng):
        super().__init__()
        _, channels = in_shape
        k, f = spec.kernel_size, spec.filters
        self.activation = spec.activation
        self.w = _glorot(rng, k * channels, k * f, (k, channels, f))
        self.b = np.zeros(f)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def forward(self, x, train, rng=None):
        out = _activate(self.activation, kernels.conv1d_forward(x, self.w, self.b))
        if train:
            self._cache = (x, out)
        return out

    def backward(self, grad):
        x, out = self._take_cache()
        gz = grad * _activation_grad(self.activation, out)
        gx, self.gw, self.gb = kernels.conv1d_backward(x, self.w, gz)
        return gx

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def param_names(self):
        return ["w", "b"]


class MaxPool1DLayer(Layer):
    def __init__(self, spec: specs.MaxPool1D, in_shape, rng):
        super().__init__()
        self.pool = spec.pool_size

    def forward(self, x, train, rng=None):
        out, arg = kernels.maxpool1d_forward(x, self.pool)
        if train:
            self._cache = (arg, x.shape[1])
        return out

    def backward(self, grad):
        arg, in_length = self._take_cache()
        return kernels.maxpool1d_backward(arg, self.pool, in_length, grad)


class BatchNormLayer(Layer):
    def __init__(self, spec: specs.BatchNorm, in_shape, rng):
        super().__init__()
        width = in_shape[-1]
        self.momentum = spec.momentum
        self.epsilon = spec.epsilon
        self.axes = (0,) if len(in_shape) == 1 else (0, 1)
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)

    def forward(self, x, train, rng=None):
        if train:
            mu = x.mean(axis=self.axes)
            var = x.var(axis=self.axes)
            xhat = (x - mu) / np.sqrt(var + self.epsilon)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            self._cache = (xhat, var)
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
        return self.gamma * xhat + self.beta

    def backward(self, grad):
        xhat, var = self._take_cache()
        n = 1
        for ax in self.axes:
            n *= xhat.shape[ax]
        self.ggamma = (grad * xhat).sum(axis=self.axes)
        self.gbeta = grad.sum(axis=self.axes)
        gxhat = grad * self.gamma
        inv = 1.0 / np.sqrt(var + self.epsilon)
        return (inv / n) * (n * gxhat
                            - gxhat.sum(axis=self.axes)
                            - xhat * (gxhat * xhat).sum(axis=self.axes))

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.ggamma, self.gbeta]

    def param_names(self):
        return ["gamma", "beta"]

    def state_arrays(self):
        # persisted but not trainable
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class DropoutLayer(Layer):
    def __init__(self, spec: specs.Dropout, in_shape, rng):
        super().__init__()
        self.rate = spec.rate

    def forward(self, x, train, rng=None):
        if not train or self.rate == 0.0:
            if train:
                self._cache = (None,)
            return x
        if rng is None:
            raise StateError("dropout needs a generator in train mode")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._cache = (mask,)
        return x * mask

    def backward(self, grad):
        (mask,) = self._take_cache()
        return grad if mask is None else grad * mask


class LSTMLayer(Layer):
    def __init__(self, spec: specs.LSTM, in_shape, rng):
        super().__init__()
        _, d = in_shape
        h = spec.units
        self.units = h
        self.wx = _glorot(rng, d, 4 * h, (d, 4 * h))
        self.wh = _glorot(rng, h, 4 * h, (h, 4 * h))
        self.b = np.zeros(4 * h)
        self.gwx = np.zeros_like(self.wx)
        self.gwh = np.zeros_like(self.wh)
        self.gb = np.zeros_like(self.b)

    def forward(self, x, train, rng=None):
        h_last, cache = kernels.lstm_forward(x, self.wx, self.wh, self.b)
        if train:
            self._cache = cache
        return h_last

    def backward(self, grad):
        cache = self._take_cache()
        gx, self.gwx, self.gwh, self.gb = kernels.lstm_backward(cache, grad)
        return gx

    def params(self):
        return [self.wx, self.wh, self.b]

    def grads(self):
        return [self.gwx, self.gwh, self.gb]

    def param_names(self):
        return ["wx", "wh", "b"]


class FlattenLayer(Layer):
    def __init__(self, spec: specs.Flatten, in_shape, rng):
        super().__init__()
        self.in_shape = tuple(in_shape)

    def forward(self, x, train, rng=None):
        if train:
            self._cache = (x.shape,)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        (shape,) = self._take_cache()
        return grad.reshape(shape)


LAYER_IMPLS = {
    specs.Dense: DenseLayer,
    specs.Conv1D: Conv1DLayer,
    specs.MaxPool1D: MaxPool1DLayer,
    specs.BatchNorm: BatchNormLayer,
    specs.Dropout: DropoutLayer,
    specs.LSTM: LSTMLayer,
    specs.Flatten: FlattenLayer,
}
