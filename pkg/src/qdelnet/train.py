"""Training protocol: stratified validation split, mini-batch SGD epoch loop,
accuracy metrics, wall-clock timing and gradient-flow diagnostics.

Wall time covers the epoch loop only; corpus loading and any up-front feature
caching happen off the clock. A training run that produces a non-finite loss
or gradient aborts immediately: the last finite model is kept and the report
is flagged as diverged at that epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset, Question, allocate_proportional
from .errors import ConfigError, InputError, NumericError, ShapeError
from .features import EmbeddingTable, featurize_batch
from .linalg import Matrix
from .nn import (
    Gradients,
    MlpModel,
    ModelConfig,
    backward,
    bce_loss,
    build_model,
    forward,
    gradient_layer_norms,
    sgd_step,
)
from .seeding import DROPOUT, PROFILE, SHUFFLE, SPLIT, stream_rng

__all__ = [
    "TrainConfig",
    "TrainReport",
    "split_train_val",
    "train",
    "evaluate",
    "initial_gradient_profile",
]

# Feature matrices smaller than this are precomputed once; larger corpora are
# featurized batch-by-batch inside the epoch loop.
_CACHE_LIMIT_BYTES = 1 << 30


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    learning_rate: float = 0.01
    validation_fraction: float = 0.10
    seed: int = 0
    record_grad_norms: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass
class TrainReport:
    """Outcome of one training run; serializes to a flat JSON document."""

    final_train_accuracy: float
    final_validation_accuracy: float
    wall_time_seconds: float
    loss_curve: list[float]
    grad_norm_history: list[list[float]] | None = None
    diverged: bool = False
    diverged_epoch: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "final_train_accuracy": self.final_train_accuracy,
            "final_validation_accuracy": self.final_validation_accuracy,
            "wall_time_seconds": self.wall_time_seconds,
            "loss_curve": self.loss_curve,
            "grad_norm_history": self.grad_norm_history,
            "diverged": self.diverged,
            "diverged_epoch": self.diverged_epoch,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainReport":
        return cls(
            final_train_accuracy=doc["final_train_accuracy"],
            final_validation_accuracy=doc["final_validation_accuracy"],
            wall_time_seconds=doc["wall_time_seconds"],
            loss_curve=list(doc["loss_curve"]),
            grad_norm_history=doc.get("grad_norm_history"),
            diverged=doc.get("diverged", False),
            diverged_epoch=doc.get("diverged_epoch"),
        )


def split_train_val(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded, stratified split: |val| = round(fraction * |dataset|), and each
    side's class balance matches the whole within one example per class."""
    if len(dataset) == 0:
        raise InputError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    n_val = int(round(fraction * n))
    if n_val >= n:
        raise ConfigError(f"fraction {fraction} leaves no training data (n={n})")
    if n_val == 0:
        raise ConfigError(f"fraction {fraction} yields an empty validation split (n={n})")
    rng = stream_rng(seed, SPLIT)
    by_class: dict[int, list[Question]] = {0: [], 1: []}
    for q in dataset.questions:
        by_class[q.label].append(q)
    sizes = [len(by_class[0]), len(by_class[1])]
    val_alloc = allocate_proportional(n_val, sizes)
    train_qs: list[Question] = []
    val_qs: list[Question] = []
    for c in (0, 1):
        order = rng.permutation(sizes[c])
        shuffled = [by_class[c][i] for i in order]
        val_qs.extend(shuffled[: val_alloc[c]])
        train_qs.extend(shuffled[val_alloc[c] :])
    train_qs = [train_qs[i] for i in rng.permutation(len(train_qs))]
    val_qs = [val_qs[i] for i in rng.permutation(len(val_qs))]
    return (
        Dataset(tuple(train_qs), name=f"{dataset.name}-train"),
        Dataset(tuple(val_qs), name=f"{dataset.name}-val"),
    )


def _derive_max_words(model: MlpModel, table: EmbeddingTable) -> int:
    feature_dim = model.input_dim - 1
    if feature_dim <= 0 or feature_dim % table.dim != 0:
        raise ShapeError(
            f"model input width {model.input_dim} is not max_words * {table.dim} + 1"
        )
    return feature_dim // table.dim


def _labels_column(questions: Sequence[Question]) -> Matrix:
    return Matrix._wrap(np.array([[float(q.label)] for q in questions]))


def train(
    model: MlpModel,
    train_set: Dataset,
    config: TrainConfig,
    table: EmbeddingTable,
    cache_features: bool | None = None,
) -> tuple[MlpModel, TrainReport]:
    """Run the full training protocol and return (final model, report).

    A validation split of config.validation_fraction is carved out of
    train_set first. Each epoch reshuffles the remaining examples with a
    seeded generator and applies one SGD step per mini-batch. When
    cache_features is None, the feature matrix is precomputed only if it
    fits comfortably in memory; both paths produce identical results.
    """
    if len(train_set) == 0:
        raise InputError("cannot train on an empty dataset")
    max_words = _derive_max_words(model, table)
    fit_set, val_set = split_train_val(train_set, config.validation_fraction, config.seed)

    n = len(fit_set)
    questions = fit_set.questions
    labels = np.array([[float(q.label)] for q in questions])
    if cache_features is None:
        cache_features = n * model.input_dim * 8 <= _CACHE_LIMIT_BYTES
    cached = featurize_batch(questions, table, max_words).array if cache_features else None

    shuffle_rng = stream_rng(config.seed, SHUFFLE)
    dropout_rng = stream_rng(config.seed, DROPOUT)

    loss_curve: list[float] = []
    grad_history: list[list[float]] | None = [] if config.record_grad_norms else None
    diverged = False
    diverged_epoch: int | None = None
    layer_count = len(model.layers)

    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        norm_sums = np.zeros(layer_count)
        batch_count = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if cached is not None:
                xb = Matrix._wrap(cached[idx])
            else:
                xb = featurize_batch([questions[i] for i in idx], table, max_words)
            yb = Matrix._wrap(labels[idx])
            try:
                preds, trace = forward(model, xb, mode="train", rng=dropout_rng)
                loss = bce_loss(preds, yb)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                grads = backward(model, trace, yb)
                model = sgd_step(model, grads, config.learning_rate)
            except NumericError:
                diverged = True
                diverged_epoch = epoch
                break
            loss_sum += loss * len(idx)
            if grad_history is not None:
                norm_sums += gradient_layer_norms(grads)
            batch_count += 1
        if diverged:
            break
        loss_curve.append(loss_sum / n)
        if grad_history is not None:
            grad_history.append((norm_sums / max(batch_count, 1)).tolist())
    wall_time = time.perf_counter() - t0

    def final_accuracy(dataset: Dataset) -> float:
        # A run that diverged can leave a model too saturated to evaluate;
        # report 0.0 rather than crash (the diverged flag tells the story).
        try:
            return evaluate(model, dataset, table)
        except NumericError:
            return 0.0

    report = TrainReport(
        final_train_accuracy=final_accuracy(fit_set),
        final_validation_accuracy=final_accuracy(val_set),
        wall_time_seconds=wall_time,
        loss_curve=loss_curve,
        grad_norm_history=grad_history,
        diverged=diverged,
        diverged_epoch=diverged_epoch,
    )
    return model, report


def evaluate(model: MlpModel, dataset: Dataset, table: EmbeddingTable, chunk_size: int = 512) -> float:
    """Accuracy (percent) under the 0.5 threshold; a prediction of exactly
    0.5 counts as the positive (deleted) class. Eval-mode forward: no dropout."""
    if len(dataset) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    max_words = _derive_max_words(model, table)
    correct = 0
    questions = dataset.questions
    for start in range(0, len(questions), chunk_size):
        chunk = questions[start : start + chunk_size]
        x = featurize_batch(chunk, table, max_words)
        preds, _ = forward(model, x, mode="eval")
        predicted = preds.array[:, 0] >= 0.5
        actual = np.array([q.label == 1 for q in chunk])
        correct += int(np.sum(predicted == actual))
    return 100.0 * correct / len(questions)


def initial_gradient_profile(
    config: ModelConfig,
    sample: Matrix,
    labels: Matrix,
    repeats: int,
) -> list[float]:
    """Mean per-layer gradient norms at initialization.

    Builds `repeats` fresh models (seeds config.seed + i), runs one
    forward/backward on the sample batch each, and averages the per-layer
    weight-gradient norms. This is the diagnostic that shows backpropagated
    signal shrinking in early layers as depth grows.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    totals = np.zeros(len(config.hidden_widths) + 1)
    for i in range(repeats):
        cfg = replace(config, seed=config.seed + i)
        model = build_model(cfg)
        rng = stream_rng(cfg.seed, PROFILE)
        _, trace = forward(model, sample, mode="train", rng=rng)
        grads = backward(model, trace, labels)
        totals += gradient_layer_norms(grads)
    return (totals / repeats).tolist()
