"""The four detector architectures and their training loop.

Widths, filter counts and dropout rates below are toolkit defaults
(overridable through the builder arguments); the fixed training
hyperparameters are epochs, batch size, learning rate and optimizer.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import DEFAULT_SEED
from .engine import (
    Adam,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    LSTM,
    MaxPool1D,
    Network,
    NetworkSpec,
    bce_loss,
    mse_loss,
    msle_loss,
    parameter_count,
)
from .engine.serialize import read_blob, write_blob
from .engine.specs import spec_from_doc, spec_to_doc
from .errors import ConfigError, DataError, DimensionError, DivergedError
from .flows import FlowLabel
from .ingest import (
    FeatureMatrix,
    NormalizationParams,
    apply_normalizer,
    fit_normalizer,
)

FAMILIES = ("dnn", "cnn", "lstm", "autoencoder")
SUPERVISED_FAMILIES = ("dnn", "cnn", "lstm")

MODEL_FORMAT_VERSION = 1

#: batch size used by the autoencoder sweep experiments
AE_SWEEP_BATCH = 512


@dataclass(frozen=True)
class ModelConfig:
    family: str
    input_dim: int
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 0.01
    seed: int = DEFAULT_SEED
    validation_fraction: float = 0.1
    loss: str = "auto"  # auto: bce for supervised, msle for autoencoder

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation fraction must be in (0, 1)")
        if self.loss not in ("auto", "bce", "msle", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "family", "input_dim", "epochs", "batch_size", "learning_rate",
            "seed", "validation_fraction", "loss")}


def build_dnn(input_dim: int, hidden=(64, 32)) -> NetworkSpec:
    """Two relu hidden layers and a sigmoid output unit."""
    if input_dim < 1:
        raise ConfigError("dnn needs input_dim >= 1")
    layers = tuple(Dense(u, "relu") for u in hidden) + (Dense(1, "sigmoid"),)
    return NetworkSpec((input_dim,), layers)


def build_cnn(input_dim: int, filters: int = 32, kernel_size: int = 3,
              pool_size: int = 2, dropout: float = 0.2,
              dense_units: int = 32) -> NetworkSpec:
    """conv -> batch norm -> max pool -> dropout -> dense classifier.

    The flat feature vector is treated as a length-input_dim,
    single-channel sequence.
    """
    if input_dim < kernel_size:
        raise ConfigError(f"cnn needs input_dim >= kernel_size ({kernel_size}), "
                          f"got {input_dim}")
    if (input_dim - kernel_size + 1) < pool_size:
        raise ConfigError("cnn input too short for the pooling stage")
    return NetworkSpec(
        (input_dim, 1),
        (
            Conv1D(filters, kernel_size, "relu"),
            BatchNorm(),
            MaxPool1D(pool_size),
            Dropout(dropout),
            Flatten(),
            Dense(dense_units, "relu"),
            Dense(1, "sigmoid"),
        ),
    )


def build_lstm(input_dim: int, units: int = 32, dropout: float = 0.2) -> NetworkSpec:
    """Feature vector presented as a univariate sequence, one step per feature."""
    if input_dim < 1:
        raise ConfigError("lstm needs input_dim >= 1")
    return NetworkSpec(
        (input_dim, 1),
        (LSTM(units), Dropout(dropout), Dense(1, "sigmoid")),
    )


def build_autoencoder(input_dim: int) -> NetworkSpec:
    """Symmetric compressor: d -> ceil(d/2) -> ceil(d/4) -> ceil(d/2) -> d."""
    if input_dim < 2:
        raise ConfigError("autoencoder needs input_dim >= 2")
    half = math.ceil(input_dim / 2)
    bottleneck = math.ceil(input_dim / 4)
    return NetworkSpec(
        (input_dim,),
        (
            Dense(half, "relu"),
            Dense(bottleneck, "relu"),
            Dense(half, "relu"),
            Dense(input_dim, "sigmoid"),
        ),
    )


_BUILDERS = {
    "dnn": build_dnn,
    "cnn": build_cnn,
    "lstm": build_lstm,
    "autoencoder": build_autoencoder,
}


def build_network_spec(family: str, input_dim: int) -> NetworkSpec:
    if family not in _BUILDERS:
        raise ConfigError(f"unknown family {family!r}")
    return _BUILDERS[family](input_dim)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: Optional[float]
    val_loss: float
    val_accuracy: Optional[float]
    seconds: float


@dataclass
class TrainedModel:
    family: str
    spec: NetworkSpec
    network: Network
    normalizer: NormalizationParams
    history: list[EpochStats] = field(default_factory=list)
    wall_seconds: float = 0.0
    seed: int = DEFAULT_SEED
    config: Optional[ModelConfig] = None

    @property
    def parameter_count(self) -> int:
        return self.network.parameter_count()

    @property
    def final_train_loss(self) -> Optional[float]:
        return self.history[-1].train_loss if self.history else None


def resolve_loss(config: ModelConfig):
    name = config.loss
    if name == "auto":
        name = "msle" if config.family == "autoencoder" else "bce"
    return {"bce": bce_loss, "msle": msle_loss, "mse": mse_loss}[name]


def _stratified_split(labels: np.ndarray, fraction: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(held-out indices, remaining indices), class proportions preserved."""
    held = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = rng.permutation(idx)
        held.append(idx[: int(round(fraction * len(idx)))])
    held = np.sort(np.concatenate(held)) if held else np.array([], dtype=np.int64)
    if held.size == 0:
        held = np.array([int(rng.integers(len(labels)))])
    mask = np.ones(len(labels), dtype=bool)
    mask[held] = False
    return held, np.flatnonzero(mask)


def _plain_split(n: int, fraction: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    k = max(1, int(round(fraction * n)))
    return np.sort(perm[:k]), np.sort(perm[k:])


def train(spec: NetworkSpec, data: FeatureMatrix, config: ModelConfig) -> TrainedModel:
    """Fixed-epoch training with a seeded, fully reproducible loop."""
    if data.n_rows == 0:
        raise DataError("cannot train on an empty dataset")
    if data.n_features != spec.input_dim:
        raise DimensionError(
            f"dataset has {data.n_features} features, network expects {spec.input_dim}")
    supervised = config.family != "autoencoder"
    if supervised and data.labels is None:
        raise DataError(f"family {config.family!r} needs labeled data")

    init_ss, split_ss, loop_ss = np.random.SeedSequence(config.seed).spawn(3)
    split_rng = np.random.default_rng(split_ss)
    if supervised:
        val_idx, train_idx = _stratified_split(data.labels, config.validation_fraction,
                                               split_rng)
    else:
        val_idx, train_idx = _plain_split(data.n_rows, config.validation_fraction,
                                          split_rng)
    if train_idx.size == 0:
        raise DataError("validation split left no training rows")

    normalizer = fit_normalizer(data.subset(train_idx))
    train_part = apply_normalizer(data.subset(train_idx), normalizer)
    val_part = apply_normalizer(data.subset(val_idx), normalizer)

    xtr = train_part.values
    xval = val_part.values
    if supervised:
        ytr = train_part.labels.astype(np.float64).reshape(-1, 1)
        yval = val_part.labels.astype(np.float64).reshape(-1, 1)
    else:
        ytr, yval = xtr, xval

    network = Network(spec, np.random.default_rng(init_ss))
    optimizer = Adam(network.params(), learning_rate=config.learning_rate)
    loop_rng = np.random.default_rng(loop_ss)
    loss_fn = resolve_loss(config)

    history: list[EpochStats] = []
    started = time.perf_counter()
    n_train = xtr.shape[0]
    batch = min(config.batch_size, n_train)

    for epoch in range(1, config.epochs + 1):
        tic = time.perf_counter()
        order = loop_rng.permutation(n_train)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n_train, batch):
            rows = order[start:start + batch]
            xb = xtr[rows]
            yb = ytr[rows]
            out = network.forward(xb, train=True, rng=loop_rng)
            loss, grad = loss_fn(out, yb)
            if not math.isfinite(loss):
                raise DivergedError(f"training diverged at epoch {epoch}", epoch=epoch)
            network.backward(grad)
            optimizer.step(network.params(), network.grads())
            loss_sum += loss * len(rows)
            if supervised:
                correct += int(np.sum((out.ravel() > 0.5) == (yb.ravel() > 0.5)))

        val_out = network.forward(xval, train=False) if len(xval) else None
        if val_out is not None:
            val_loss, _ = loss_fn(val_out, yval)
            if not math.isfinite(val_loss):
                raise DivergedError(f"validation loss diverged at epoch {epoch}",
                                    epoch=epoch)
            val_acc = (float(np.mean((val_out.ravel() > 0.5) == (yval.ravel() > 0.5)))
                       if supervised else None)
        else:
            val_loss, val_acc = float("nan"), None

        history.append(EpochStats(
            epoch=epoch,
            train_loss=loss_sum / n_train,
            train_accuracy=correct / n_train if supervised else None,
            val_loss=val_loss,
            val_accuracy=val_acc,
            seconds=time.perf_counter() - tic,
        ))

    return TrainedModel(
        family=config.family,
        spec=spec,
        network=network,
        normalizer=normalizer,
        history=history,
        wall_seconds=time.perf_counter() - started,
        seed=config.seed,
        config=config,
    )


def predict(model: TrainedModel, features: FeatureMatrix):
    """Per-row elephant probability and label (Elephant iff p > 0.5)."""
    if model.family == "autoencoder":
        raise ConfigError("autoencoder models classify by reconstruction threshold; "
                          "see eleflow.ae")
    if features.n_features != model.spec.input_dim:
        raise DimensionError(
            f"features have {features.n_features} columns, model expects "
            f"{model.spec.input_dim}")
    normalized = apply_normalizer(features, model.normalizer)
    probs = model.network.forward(normalized.values, train=False).ravel()
    labels = [FlowLabel.ELEPHANT if p > 0.5 else FlowLabel.MOUSE for p in probs]
    return probs, labels


def save_model(model: TrainedModel, path) -> None:
    """Persist specs, parameters, normalizer and seed (not the history)."""
    header = {
        "kind": "eleflow-model",
        "format_version": MODEL_FORMAT_VERSION,
        "family": model.family,
        "spec": spec_to_doc(model.spec),
        "normalizer": model.normalizer.to_dict(),
        "seed": model.seed,
        "config": model.config.to_dict() if model.config else None,
    }
    write_blob(path, header, model.network.named_arrays())


def load_model(path) -> TrainedModel:
    header, arrays = read_blob(path)
    if header.get("kind") != "eleflow-model":
        raise DataError(f"{path}: not an eleflow model file")
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format "
                        f"{header.get('format_version')!r}")
    spec = spec_from_doc(header["spec"])
    network = Network(spec, np.random.default_rng(0))
    network.load_arrays(arrays)
    config = ModelConfig(**header["config"]) if header.get("config") else None
    return TrainedModel(
        family=header["family"],
        spec=spec,
        network=network,
        normalizer=NormalizationParams.from_dict(header["normalizer"]),
        history=[],
        wall_seconds=0.0,
        seed=header["seed"],
        config=config,
    )


def derive_seed(seed: int, index: int) -> int:
    """Deterministic sub-seed for fold/row-level parallel work."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def config_for(family: str, input_dim: int, base: ModelConfig) -> ModelConfig:
    return replace(base, family=family, input_dim=input_dim)
