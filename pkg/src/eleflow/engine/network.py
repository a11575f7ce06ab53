"""A network is an ordered layer stack built from a NetworkSpec."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, StateError
from . import specs
from .layers import LAYER_IMPLS, BatchNormLayer


class Network:
    """Layer stack with parameters; exclusively owned while training."""

    def __init__(self, spec: specs.NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        self.layers = []
        shape = spec.input_shape
        for layer_spec, out_shape in zip(spec.layers, specs.output_shapes(spec)):
            impl = LAYER_IMPLS[type(layer_spec)]
            self.layers.append(impl(layer_spec, shape, rng))
            shape = out_shape
        self._ran_forward = False

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"input: expected a (batch, features) array, got {x.shape}")
        expected = self.spec.input_dim
        if x.shape[1] != expected:
            raise DimensionError(
                f"input: expected {expected} features, got {x.shape[1]}")
        if len(self.spec.input_shape) == 2:
            x = x.reshape(x.shape[0], *self.spec.input_shape)
        for idx, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train, rng)
            except ValueError as exc:
                raise DimensionError(f"layer {idx} ({type(layer).__name__}): {exc}") from exc
        self._ran_forward = train
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Backpropagate the loss gradient; fills every layer's grads."""
        if not self._ran_forward:
            raise StateError("backward requires a prior train-mode forward")
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self._ran_forward = False
        return grad

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All persistable arrays: parameters plus batch-norm statistics."""
        out = []
        for idx, layer in enumerate(self.layers):
            for name, arr in zip(layer.param_names(), layer.params()):
                out.append((f"{idx}.{name}", arr))
            if isinstance(layer, BatchNormLayer):
                for name, arr in layer.state_arrays():
                    out.append((f"{idx}.{name}", arr))
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, target in self.named_arrays():
            if name not in arrays:
                raise DimensionError(f"serialized model missing array {name!r}")
            source = arrays[name]
            if source.shape != target.shape:
                raise DimensionError(
                    f"array {name!r}: shape {source.shape} != expected {target.shape}")
            target[...] = source
