"""Stratified cross-validation, confusion matrices and the experiment
harness (epoch/batch sweeps, model comparison).

Folds are balanced by dealing class-sorted positions round-robin, so
fold sizes differ by at most one (the short fold lands last) and each
fold's class counts stay within one of exact proportionality.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .ae import fit_ae_detector, reconstruction_losses
from .engine import NetworkSpec, parameter_count
from .errors import DataError, DivergedError, EleflowError
from .ingest import FeatureMatrix
from .models import (
    ModelConfig,
    build_network_spec,
    config_for,
    derive_seed,
    predict,
    train,
)

FAMILY_CHOICES = ("dnn", "cnn", "lstm", "autoencoder")
DEFAULT_EPOCH_SWEEP = (5, 10, 20, 50, 100, 1000)
DEFAULT_BATCH_SWEEP = (32, 64, 128, 512, 1024)
HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with Elephant as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, truth, predicted) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if truth.shape != predicted.shape:
            raise DataError("truth/prediction length mismatch")
        return cls(
            tp=int(np.sum((truth == 1) & (predicted == 1))),
            tn=int(np.sum((truth == 0) & (predicted == 0))),
            fp=int(np.sum((truth == 0) & (predicted == 1))),
            fn=int(np.sum((truth == 1) & (predicted == 0))),
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def false_positive_rate(self) -> float:
        """FP share of all evaluated rows."""
        return self.fp / self.total

    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def accuracy(cm: ConfusionMatrix) -> float:
    """(TP + TN) / (TP + FP + TN + FN)."""
    if cm.total == 0:
        raise DataError("accuracy of an empty confusion matrix is undefined")
    return (cm.tp + cm.tn) / cm.total


@dataclass
class FoldPlan:
    k: int
    assignment: np.ndarray  # per-row test-fold index in [0, k)
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def test_sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.k).tolist()


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Deterministic stratified fold assignment.

    Position j of the class-sorted ordering goes to fold j % k, which
    pins the short fold (when N % k != 0) to the last position; each
    class's shuffled members then fill its slots in fold order.
    """
    labels = np.asarray([int(v) for v in labels], dtype=np.int64)
    n = labels.shape[0]
    if k < 2:
        raise DataError("k must be >= 2")
    if k > n:
        raise DataError(f"k={k} exceeds the number of rows ({n})")

    classes, counts = np.unique(labels, return_counts=True)
    if np.min(counts) < k:
        warnings.warn(
            f"class with {int(np.min(counts))} members cannot appear in every "
            f"fold (k={k}); folds stay size-balanced", stacklevel=2)

    # fold of each position in the class-sorted order
    position_fold = np.arange(n) % k
    sorted_labels = np.sort(labels)
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    start = 0
    for cls, count in zip(classes, counts):
        folds_for_class = position_fold[start:start + count]
        members = rng.permutation(np.flatnonzero(labels == cls))
        assignment[members] = folds_for_class
        start += count
    assert start == n and np.array_equal(np.sort(labels), sorted_labels)
    return FoldPlan(k=k, assignment=assignment, seed=seed)


@dataclass
class FoldResult:
    fold: int
    cm: ConfusionMatrix
    accuracy: float
    seconds: float


@dataclass
class EvalReport:
    family: str
    k: int
    seed: int
    folds: list[FoldResult]
    config: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.accuracy for f in self.folds]))

    @property
    def std_accuracy(self) -> float:
        return float(np.std([f.accuracy for f in self.folds]))

    @property
    def total_cm(self) -> ConfusionMatrix:
        return ConfusionMatrix(
            tp=sum(f.cm.tp for f in self.folds),
            tn=sum(f.cm.tn for f in self.folds),
            fp=sum(f.cm.fp for f in self.folds),
            fn=sum(f.cm.fn for f in self.folds),
        )

    def to_json_dict(self) -> dict:
        # wall times live in the run manifest, keeping this deterministic
        return {
            "family": self.family,
            "k": self.k,
            "seed": self.seed,
            "config": self.config,
            "folds": [{"fold": f.fold, **f.cm.to_dict(), "accuracy": f.accuracy}
                      for f in self.folds],
            "total": self.total_cm.to_dict(),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }

    def to_text(self) -> str:
        lines = [f"family={self.family} k={self.k} seed={self.seed}"]
        for f in self.folds:
            lines.append(
                f"  fold {f.fold:2d}: acc={f.accuracy:.6f} "
                f"tp={f.cm.tp} tn={f.cm.tn} fp={f.cm.fp} fn={f.cm.fn} "
                f"({f.seconds:.3f}s)")
        lines.append(f"  mean={self.mean_accuracy:.6f} std={self.std_accuracy:.6f}")
        return "\n".join(lines)


def _evaluate_family(family: str, train_part: FeatureMatrix, test_part: FeatureMatrix,
                     config: ModelConfig):
    """Train on one split, classify the other; returns (cm, model, extras)."""
    if family == "autoencoder":
        model, sweep = fit_ae_detector(train_part, config)
        profile = reconstruction_losses(model, test_part)
        preds = (profile.losses > sweep.best_threshold).astype(np.int64)
        cm = ConfusionMatrix.from_labels(test_part.labels, preds)
        return cm, model, sweep
    spec = build_network_spec(family, train_part.n_features)
    model = train(spec, train_part, config)
    probs, _ = predict(model, test_part)
    cm = ConfusionMatrix.from_labels(test_part.labels, (probs > 0.5).astype(np.int64))
    return cm, model, None


def cross_validate(family: str, dataset: FeatureMatrix, config: ModelConfig,
                   k: int = 10) -> EvalReport:
    """Stratified k-fold evaluation with per-fold derived seeds."""
    if dataset.labels is None:
        raise DataError("cross-validation needs labeled data")
    plan = stratified_kfold(dataset.labels, k, config.seed)
    folds = []
    for fold in range(k):
        tic = time.perf_counter()
        fold_cfg = replace(config_for(family, dataset.n_features, config),
                           seed=derive_seed(config.seed, fold))
        train_part = dataset.subset(plan.train_indices(fold))
        test_part = dataset.subset(plan.test_indices(fold))
        try:
            cm, _, _ = _evaluate_family(family, train_part, test_part, fold_cfg)
        except DivergedError as exc:
            raise DivergedError(f"fold {fold + 1}: {exc}", epoch=exc.epoch) from exc
        folds.append(FoldResult(fold=fold + 1, cm=cm, accuracy=accuracy(cm),
                                seconds=time.perf_counter() - tic))
    return EvalReport(family=family, k=k, seed=config.seed, folds=folds,
                      config=config.to_dict())


def _holdout_split(dataset: FeatureMatrix, seed: int,
                   fraction: float = HOLDOUT_FRACTION):
    from .models import _stratified_split

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x0E,)))
    test_idx, train_idx = _stratified_split(dataset.labels, fraction, rng)
    return dataset.subset(train_idx), dataset.subset(test_idx)


@dataclass
class SweepTable:
    axis: str  # "epochs" or "batch"
    rows: list[tuple[int, float]]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([self.axis, "accuracy"])
            for value, acc in self.rows:
                writer.writerow([value, repr(acc)])


def epoch_sweep(family: str, dataset: FeatureMatrix, config: ModelConfig,
                epochs_list: Sequence[int] = DEFAULT_EPOCH_SWEEP,
                batch: int = 512) -> SweepTable:
    """Hold everything but the epoch count constant; one row per setting."""
    if len(epochs_list) == 0:
        raise DataError("epochs_list must not be empty")
    if dataset.labels is None:
        raise DataError("sweeps need labeled data")
    train_part, test_part = _holdout_split(dataset, config.seed)
    rows = []
    for epochs in epochs_list:
        cfg = replace(config_for(family, dataset.n_features, config),
                      epochs=int(epochs), batch_size=int(batch))
        cm, _, _ = _evaluate_family(family, train_part, test_part, cfg)
        rows.append((int(epochs), accuracy(cm)))
    return SweepTable(axis="epochs", rows=rows)


def batch_sweep(family: str, dataset: FeatureMatrix, config: ModelConfig,
                batch_list: Sequence[int] = DEFAULT_BATCH_SWEEP,
                epochs: int = 50) -> SweepTable:
    """Hold everything but the batch size constant; one row per setting."""
    if len(batch_list) == 0:
        raise DataError("batch_list must not be empty")
    if dataset.labels is None:
        raise DataError("sweeps need labeled data")
    train_part, test_part = _holdout_split(dataset, config.seed)
    rows = []
    for batch in batch_list:
        cfg = replace(config_for(family, dataset.n_features, config),
                      epochs=int(epochs), batch_size=int(batch))
        cm, _, _ = _evaluate_family(family, train_part, test_part, cfg)
        rows.append((int(batch), accuracy(cm)))
    return SweepTable(axis="batch", rows=rows)


@dataclass
class ComparisonRow:
    family: str
    dataset: str
    accuracy: Optional[float]
    seconds: Optional[float]
    loss: Optional[float]
    parameters: Optional[int]
    error: Optional[str] = None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]

    def to_json_dict(self) -> dict:
        return {"rows": [vars(r).copy() for r in self.rows]}

    def to_text(self) -> str:
        header = ("family", "accuracy", "runtime", "loss", "dataset", "parameters")
        table = [header]
        for r in self.rows:
            if r.error:
                table.append((r.family, "ERROR", "-", "-", r.dataset, r.error))
            else:
                table.append((r.family, f"{r.accuracy:.4f}", f"{r.seconds:.2f}s",
                              f"{r.loss:.4f}", r.dataset, str(r.parameters)))
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                 for row in table]
        return "\n".join(lines)


def compare_models(datasets: Sequence[tuple[str, FeatureMatrix]],
                   config: ModelConfig,
                   families: Sequence[str] = FAMILY_CHOICES) -> ComparisonReport:
    """One row per (family, dataset); failures are reported, not fatal."""
    rows = []
    for name, dataset in datasets:
        for family in families:
            tic = time.perf_counter()
            try:
                train_part, test_part = _holdout_split(dataset, config.seed)
                cfg = config_for(family, dataset.n_features, config)
                cm, model, _ = _evaluate_family(family, train_part, test_part, cfg)
                rows.append(ComparisonRow(
                    family=family,
                    dataset=name,
                    accuracy=accuracy(cm),
                    seconds=time.perf_counter() - tic,
                    loss=model.final_train_loss,
                    parameters=model.parameter_count,
                ))
            except EleflowError as exc:
                rows.append(ComparisonRow(family=family, dataset=name, accuracy=None,
                                          seconds=None, loss=None, parameters=None,
                                          error=str(exc)))
    return ComparisonReport(rows)


def count_parameters(spec: NetworkSpec) -> int:
    """Trainable parameter total for a network spec."""
    return parameter_count(spec)
