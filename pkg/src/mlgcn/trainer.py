"""Mini-batch SGD with momentum, L2 weight decay and a step learning-rate schedule."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset_io import FeatureDataset
from .errors import ConfigurationError, DimensionError, NonFiniteError, TrainingError
from .model import MlGcnModel, bce_loss, generate_classifiers, predict
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    decay_every: int = 40
    decay_factor: float = 0.1
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0:
            raise ConfigurationError(f"lr0 must be non-negative, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1 or self.epochs < 1 or self.decay_every < 1:
            raise ConfigurationError("batch_size, epochs and decay_every must be at least 1")

    @classmethod
    def desk_scale(cls, epochs: int = 30, **overrides) -> "TrainConfig":
        """Shorter run keeping the 100/40 epoch-to-decay ratio."""
        return cls(epochs=epochs, decay_every=max(1, round(epochs * 40 / 100)), **overrides)


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """``lr0 * decay_factor ** (epoch // decay_every)`` for a 0-based epoch."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be non-negative, got {epoch}")
    return config.lr0 * config.decay_factor ** (epoch // config.decay_every)


@dataclass
class OptimizerState:
    velocity: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "OptimizerState":
        return cls([np.zeros(np.shape(p)) for p in params])


def sgd_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState,
               lr: float, momentum: float, weight_decay: float) -> tuple[list[np.ndarray], OptimizerState]:
    """One momentum step with the L2 penalty folded into the gradient.

    ``g = grad + wd * param``, ``v = momentum * v + g``, ``param -= lr * v``.
    Inputs are left untouched.
    """
    if not (len(params) == len(grads) == len(state.velocity)):
        raise DimensionError("params, grads and velocity buffers differ in count")
    new_params, new_vel = [], []
    for k, (p, g, v) in enumerate(zip(params, grads, state.velocity)):
        p, g = np.asarray(p, dtype=np.float64), np.asarray(g, dtype=np.float64)
        if p.shape != g.shape or p.shape != v.shape:
            raise DimensionError(f"parameter {k}: shapes {p.shape}, {g.shape}, {v.shape} disagree")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {k}")
        step = g + weight_decay * p
        v = momentum * v + step
        new_params.append(p - lr * v)
        new_vel.append(v)
    return new_params, OptimizerState(new_vel)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    metrics: dict | None = None

    def to_json(self) -> str:
        rec = {"epoch": self.epoch, "loss": self.loss, "lr": self.lr}
        if self.metrics is not None:
            rec["metrics"] = self.metrics
        return json.dumps(rec, sort_keys=True)


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> EpochRecord:
        return self.records[i]

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path: str | os.PathLike) -> "TrainHistory":
        with open(path, encoding="utf-8") as fh:
            return cls([EpochRecord(**json.loads(line)) for line in fh if line.strip()])


def epoch_batches(num_samples: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """A fresh permutation of the sample indices, cut into consecutive batches."""
    order = rng.permutation(num_samples)
    return [order[i:i + batch_size] for i in range(0, num_samples, batch_size)]


def train_step(model: MlGcnModel, X: np.ndarray, Y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Forward and backward for one batch; returns the loss and per-layer gradients."""
    weights = [Tensor._wrap(w.data, requires_grad=True) for w in model.weights]
    model = model.with_weights(weights)
    with Tape() as tape:
        W = generate_classifiers(model)
        loss = bce_loss(predict(W, X), Y)
    grads = backward(loss, tape)
    return loss.item(), [grads[w] for w in weights]


def train(model: MlGcnModel, dataset: FeatureDataset, config: TrainConfig = TrainConfig(),
          evaluate: Callable[[MlGcnModel], dict] | None = None) -> tuple[MlGcnModel, TrainHistory]:
    """Optimize the GCN weights; deterministic for a given ``config.seed``.

    ``evaluate``, if supplied, is called after every epoch and its result is
    stored in the history record.
    """
    if len(dataset) == 0:
        raise ConfigurationError("training set is empty")
    if dataset.feature_dim != model.feature_dim:
        raise DimensionError(f"features have D={dataset.feature_dim}, model expects {model.feature_dim}")
    if dataset.num_labels != model.num_labels:
        raise DimensionError(f"dataset has {dataset.num_labels} labels, model has {model.num_labels}")

    X_all = np.asarray(dataset.features, dtype=np.float64)
    Y_all = dataset.label_matrix()
    rng = np.random.default_rng(config.seed)
    params = model.weight_arrays()
    state = OptimizerState.zeros_like(params)
    history = TrainHistory()

    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        total = 0.0
        for b, idx in enumerate(epoch_batches(len(dataset), config.batch_size, rng)):
            try:
                loss, grads = train_step(model, X_all[idx], Y_all[idx])
                params, state = sgd_update(params, grads, state, lr, config.momentum, config.weight_decay)
                model = model.with_weights(params)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            total += loss * len(idx)
        mean_loss = total / len(dataset)
        if not math.isfinite(mean_loss):
            raise TrainingError(f"epoch {epoch}: non-finite mean loss")
        metrics = evaluate(model) if evaluate is not None else None
        history.records.append(EpochRecord(epoch, mean_loss, lr, metrics))
        logger.debug("epoch %d loss %.6f lr %g", epoch, mean_loss, lr)
    return model, history


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
