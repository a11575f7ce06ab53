"""Unsupervised elephant detection via autoencoder reconstruction loss.

The autoencoder is fitted on mouse traffic only; elephants sit off that
manifold and reconstruct badly. The decision threshold is picked by
sweeping percentiles of the validation losses and keeping the one with
the best validation accuracy (ties break toward the lower percentile).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine.losses import per_row_msle
from .errors import ConfigError, DataError, DimensionError
from .flows import FlowLabel
from .ingest import FeatureMatrix, apply_normalizer
from .models import (
    ModelConfig,
    TrainedModel,
    build_autoencoder,
    train,
)

DEFAULT_PERCENTILES = tuple(range(90, 100))


@dataclass
class ReconstructionProfile:
    """Per-row reconstruction loss, with true labels when scoring."""

    losses: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if self.losses.ndim != 1:
            raise DataError("losses must be a 1-D array")
        if np.any(self.losses < 0):
            raise DataError("reconstruction losses must be non-negative")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != self.losses.shape:
                raise DataError("labels length does not match losses")


@dataclass(frozen=True)
class SweepRow:
    percentile: int
    threshold: float
    accuracy: float


@dataclass
class ThresholdSweepResult:
    rows: list[SweepRow]

    def __post_init__(self):
        if any(a.percentile >= b.percentile
               for a, b in zip(self.rows, self.rows[1:])):
            raise DataError("sweep rows must be sorted by percentile ascending")

    @property
    def best(self) -> SweepRow:
        best_acc = max(r.accuracy for r in self.rows)
        return next(r for r in self.rows if r.accuracy == best_acc)

    @property
    def best_threshold(self) -> float:
        return self.best.threshold

    @property
    def best_accuracy(self) -> float:
        return self.best.accuracy

    def to_json_dict(self) -> dict:
        return {
            "rows": [{"percentile": r.percentile, "threshold": r.threshold,
                      "validation_accuracy": r.accuracy, "best": r == self.best}
                     for r in self.rows],
            "best_percentile": self.best.percentile,
            "best_threshold": self.best_threshold,
            "best_validation_accuracy": self.best_accuracy,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["percentile", "threshold", "validation_accuracy", "best"])
            for row in self.rows:
                writer.writerow([row.percentile, repr(row.threshold),
                                 repr(row.accuracy), int(row == self.best)])

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def reconstruct(model: TrainedModel, rows: FeatureMatrix) -> np.ndarray:
    """Normalized inputs and their reconstructions, stacked as (x, x_hat)."""
    if model.family != "autoencoder":
        raise ConfigError("reconstruction requires an autoencoder model")
    if rows.n_features != model.spec.input_dim:
        raise DimensionError(
            f"rows have {rows.n_features} features, model expects {model.spec.input_dim}")
    x = apply_normalizer(rows, model.normalizer).values
    return x, model.network.forward(x, train=False)


def reconstruction_losses(model: TrainedModel, rows: FeatureMatrix) -> ReconstructionProfile:
    """Per-row squared-log reconstruction error under the model's scaling."""
    x, out = reconstruct(model, rows)
    return ReconstructionProfile(per_row_msle(out, x), rows.labels)


def percentile_threshold(losses: Sequence[float], p: float) -> float:
    """Linear-interpolation percentile of the losses; p=0 min, p=100 max."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise DataError("cannot take a percentile of no losses")
    if not 0.0 <= p <= 100.0:
        raise DataError(f"percentile must be in [0, 100], got {p}")
    return float(np.percentile(losses, p, method="linear"))


def classify_by_threshold(loss: float, threshold: float) -> FlowLabel:
    """Elephant iff the reconstruction loss strictly exceeds the threshold."""
    return FlowLabel.ELEPHANT if loss > threshold else FlowLabel.MOUSE


def classify_profile(profile: ReconstructionProfile, threshold: float) -> np.ndarray:
    return (profile.losses > threshold).astype(np.int64)


def sweep_thresholds(model: TrainedModel, validation: FeatureMatrix,
                     percentiles: Sequence[int] = DEFAULT_PERCENTILES
                     ) -> ThresholdSweepResult:
    """Score every percentile threshold on a mixed validation split."""
    if validation.labels is None:
        raise DataError("threshold sweep needs labeled validation rows")
    if len(set(validation.labels.tolist())) < 2:
        raise DataError("threshold sweep needs both classes in the validation set")
    if len(percentiles) == 0:
        raise DataError("no percentiles to sweep")
    profile = reconstruction_losses(model, validation)
    rows = []
    for p in sorted(percentiles):
        thr = percentile_threshold(profile.losses, p)
        preds = classify_profile(profile, thr)
        acc = float(np.mean(preds == profile.labels))
        rows.append(SweepRow(percentile=int(p), threshold=thr, accuracy=acc))
    return ThresholdSweepResult(rows)


def fit_ae_detector(dataset: FeatureMatrix, config: ModelConfig,
                    percentiles: Sequence[int] = DEFAULT_PERCENTILES,
                    train_on_all: bool = False
                    ) -> tuple[TrainedModel, ThresholdSweepResult]:
    """Train on mouse-only rows, pick the threshold on a mixed hold-out.

    ``train_on_all`` keeps elephants in the training pool for
    sensitivity analysis.
    """
    if dataset.labels is None:
        raise DataError("the detector needs labels for its validation sweep")
    from .models import _stratified_split  # shared split logic

    split_rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(0xAE,)))
    val_idx, pool_idx = _stratified_split(dataset.labels, config.validation_fraction,
                                          split_rng)
    pool = dataset.subset(pool_idx)
    if not train_on_all:
        mouse_idx = np.flatnonzero(pool.labels == FlowLabel.MOUSE.value)
        if mouse_idx.size == 0:
            raise DataError("no mouse-labeled rows to train the autoencoder on")
        pool = pool.subset(mouse_idx)

    spec = build_autoencoder(dataset.n_features)
    model = train(spec, pool, config)
    sweep = sweep_thresholds(model, dataset.subset(val_idx), percentiles)
    return model, sweep
