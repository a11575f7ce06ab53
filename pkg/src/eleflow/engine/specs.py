"""Declarative layer specs and the shape/parameter algebra over them.

A NetworkSpec is pure data: it can be validated, counted and serialized
without instantiating any parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from ..errors import ConfigError

ACTIVATIONS = ("relu", "sigmoid", "linear")


def _check_activation(activation: str):
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "linear"

    def __post_init__(self):
        if self.units < 1:
            raise ConfigError("Dense units must be >= 1")
        _check_activation(self.activation)


@dataclass(frozen=True)
class Conv1D:
    filters: int
    kernel_size: int
    activation: str = "linear"

    def __post_init__(self):
        if self.filters < 1 or self.kernel_size < 1:
            raise ConfigError("Conv1D filters and kernel_size must be >= 1")
        _check_activation(self.activation)


@dataclass(frozen=True)
class MaxPool1D:
    pool_size: int

    def __post_init__(self):
        if self.pool_size < 1:
            raise ConfigError("MaxPool1D pool_size must be >= 1")


@dataclass(frozen=True)
class BatchNorm:
    momentum: float = 0.9
    epsilon: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("BatchNorm momentum must be in [0, 1)")
        if self.epsilon <= 0.0:
            raise ConfigError("BatchNorm epsilon must be > 0")


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError("Dropout rate must be in [0, 1)")


@dataclass(frozen=True)
class LSTM:
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ConfigError("LSTM units must be >= 1")


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Conv1D, MaxPool1D, BatchNorm, Dropout, LSTM, Flatten]


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape plus an ordered layer stack.

    input_shape is (features,) for flat inputs or (length, channels)
    for sequence inputs; batches of flat rows are reshaped on entry.
    """

    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.input_shape) not in (1, 2) or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"bad input shape {self.input_shape}")
        output_shapes(self)  # validate the whole stack eagerly

    @property
    def input_dim(self) -> int:
        return int(math.prod(self.input_shape))

    @property
    def output_shape(self) -> tuple[int, ...]:
        shapes = output_shapes(self)
        return shapes[-1] if shapes else self.input_shape


def output_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Per-layer output shapes (batch axis omitted); raises ConfigError
    when the stack is infeasible for the input shape."""
    shape = spec.input_shape
    shapes = []
    for idx, layer in enumerate(spec.layers):
        where = f"layer {idx} ({type(layer).__name__})"
        if isinstance(layer, Dense):
            if len(shape) != 1:
                raise ConfigError(f"{where}: Dense needs a flat input, got {shape}")
            shape = (layer.units,)
        elif isinstance(layer, Conv1D):
            if len(shape) != 2:
                raise ConfigError(f"{where}: Conv1D needs a (length, channels) input")
            length, _ = shape
            if length < layer.kernel_size:
                raise ConfigError(
                    f"{where}: input length {length} shorter than kernel {layer.kernel_size}")
            shape = (length - layer.kernel_size + 1, layer.filters)
        elif isinstance(layer, MaxPool1D):
            if len(shape) != 2:
                raise ConfigError(f"{where}: MaxPool1D needs a (length, channels) input")
            length, channels = shape
            if length < layer.pool_size:
                raise ConfigError(
                    f"{where}: input length {length} shorter than pool {layer.pool_size}")
            shape = (length // layer.pool_size, channels)
        elif isinstance(layer, LSTM):
            if len(shape) != 2:
                raise ConfigError(f"{where}: LSTM needs a (steps, features) input")
            shape = (layer.units,)
        elif isinstance(layer, Flatten):
            shape = (int(math.prod(shape)),)
        elif isinstance(layer, (BatchNorm, Dropout)):
            pass
        else:
            raise ConfigError(f"{where}: unknown layer spec")
        shapes.append(shape)
    return shapes


def parameter_count(spec: NetworkSpec) -> int:
    """Trainable parameters (batch-norm running statistics excluded)."""
    total = 0
    shape = spec.input_shape
    for layer, out in zip(spec.layers, output_shapes(spec)):
        if isinstance(layer, Dense):
            total += shape[0] * layer.units + layer.units
        elif isinstance(layer, Conv1D):
            total += layer.kernel_size * shape[1] * layer.filters + layer.filters
        elif isinstance(layer, LSTM):
            d = shape[1]
            total += 4 * (layer.units * (d + layer.units) + layer.units)
        elif isinstance(layer, BatchNorm):
            total += 2 * shape[-1]
        shape = out
    return total


_SPEC_TYPES = {cls.__name__.lower(): cls
               for cls in (Dense, Conv1D, MaxPool1D, BatchNorm, Dropout, LSTM, Flatten)}


def layer_to_doc(layer: LayerSpec) -> dict:
    doc = {"type": type(layer).__name__.lower()}
    for key, value in vars(layer).items():
        doc[key] = value
    return doc


def layer_from_doc(doc: dict) -> LayerSpec:
    kind = doc.get("type")
    if kind not in _SPEC_TYPES:
        raise ConfigError(f"unknown layer type {kind!r} in serialized spec")
    kwargs = {k: v for k, v in doc.items() if k != "type"}
    return _SPEC_TYPES[kind](**kwargs)


def spec_to_doc(spec: NetworkSpec) -> dict:
    return {"input_shape": list(spec.input_shape),
            "layers": [layer_to_doc(l) for l in spec.layers]}


def spec_from_doc(doc: dict) -> NetworkSpec:
    return NetworkSpec(tuple(doc["input_shape"]),
                       tuple(layer_from_doc(l) for l in doc["layers"]))
