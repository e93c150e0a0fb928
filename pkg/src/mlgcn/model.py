"""Stacked graph convolutions that turn label embeddings into per-label classifiers."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset_io import read_matrix, write_matrix
from .embeddings import EmbeddingMatrix, LabelVocabulary
from .errors import ConfigurationError, DataError, DimensionError, ParseError
from .label_graph import CorrelationMatrix, Stage
from .tensor import Tensor, bce_with_logits, leaky_relu, matmul, reshape, transpose

DEFAULT_LAYER_DIMS = (1024, 2048)
DEFAULT_SLOPE = 0.2


@dataclass(frozen=True)
class ModelConfig:
    layer_dims: tuple[int, ...] = DEFAULT_LAYER_DIMS
    slope: float = DEFAULT_SLOPE
    final_activation: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if not self.layer_dims:
            raise ConfigurationError("at least one GCN layer is required")
        if any(d < 1 for d in self.layer_dims):
            raise ConfigurationError(f"layer dims must be positive, got {self.layer_dims}")
        if not 0.0 <= self.slope < 1.0:
            raise ConfigurationError(f"slope must lie in [0, 1), got {self.slope}")


@dataclass(frozen=True)
class MlGcnModel:
    weights: tuple[Tensor, ...]
    adjacency: np.ndarray
    embedding: np.ndarray
    config: ModelConfig
    graph_info: dict = field(default_factory=dict, compare=False)

    @property
    def num_labels(self) -> int:
        return self.embedding.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[1]

    def with_weights(self, weights) -> "MlGcnModel":
        new = tuple(w if isinstance(w, Tensor) else Tensor(w, requires_grad=True) for w in weights)
        for old, w in zip(self.weights, new):
            if old.shape != w.shape:
                raise DimensionError(f"weight shape {w.shape} does not match {old.shape}")
        return replace(self, weights=new)

    def weight_arrays(self) -> list[np.ndarray]:
        return [w.numpy() for w in self.weights]


def _matrix(value, what: str) -> np.ndarray:
    if isinstance(value, CorrelationMatrix):
        if value.stage not in (Stage.NORMALIZED, Stage.REWEIGHTED):
            raise ConfigurationError(f"{what} must be normalized or reweighted, got stage {value.stage.value}")
        value = value.values
    elif isinstance(value, EmbeddingMatrix):
        value = value.Z
    elif isinstance(value, Tensor):
        value = value.data
    arr = np.array(value, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def init_model(embedding, adjacency, config: ModelConfig = ModelConfig(),
               feature_dim: int | None = None, graph_info: dict | None = None) -> MlGcnModel:
    """Create a model whose layer weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    ``feature_dim``, when given, must equal the last layer width.
    """
    Z = _matrix(embedding, "embedding")
    A = _matrix(adjacency, "adjacency")
    if Z.ndim != 2:
        raise ConfigurationError(f"embedding must be C x d, got shape {Z.shape}")
    C = Z.shape[0]
    if A.shape != (C, C):
        raise ConfigurationError(f"adjacency shape {A.shape} does not match {C} labels")
    if feature_dim is not None and config.layer_dims[-1] != feature_dim:
        raise ConfigurationError(
            f"last layer width {config.layer_dims[-1]} differs from feature dimension {feature_dim}"
        )
    rng = np.random.default_rng(config.seed)
    dims = (Z.shape[1],) + config.layer_dims
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True))
    return MlGcnModel(tuple(weights), A, Z, config, dict(graph_info or {}))


def generate_classifiers(model: MlGcnModel) -> Tensor:
    """Propagate the embeddings through every layer; returns the ``C x D`` classifiers."""
    A = Tensor._wrap(model.adjacency)
    H = Tensor._wrap(model.embedding)
    last = len(model.weights) - 1
    for l, W in enumerate(model.weights):
        H = matmul(A, matmul(H, W))
        if l < last or model.config.final_activation:
            H = leaky_relu(H, model.config.slope)
    return H


def predict(W: Tensor, x) -> Tensor:
    """Raw scores: ``W x`` for one feature vector, ``X W^T`` for a ``B x D`` batch."""
    if not isinstance(x, Tensor):
        x = Tensor._wrap(np.asarray(x, dtype=np.float64))
    if x.ndim == 1:
        if x.shape[0] != W.shape[1]:
            raise DimensionError(f"predict: classifiers {W.shape} vs feature {x.shape}")
        return reshape(matmul(W, reshape(x, (x.shape[0], 1))), (W.shape[0],))
    if x.ndim != 2 or x.shape[1] != W.shape[1]:
        raise DimensionError(f"predict: classifiers {W.shape} vs features {x.shape}")
    return matmul(x, transpose(W))


def bce_loss(scores: Tensor, targets) -> Tensor:
    """Binary cross-entropy on raw scores: summed over labels, averaged over the batch."""
    y = np.asarray(targets, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        bad = np.argwhere((y != 0.0) & (y != 1.0))[0]
        raise DataError(f"targets must be 0 or 1, found {y[tuple(bad)]!r} at {tuple(int(i) for i in bad)}")
    return bce_with_logits(scores, y)


def score_features(model: MlGcnModel, features) -> np.ndarray:
    """Inference helper: ``B x C`` scores for a feature matrix."""
    W = generate_classifiers(model)
    return predict(W.detach(), np.asarray(features, dtype=np.float64)).numpy()


# -- checkpoints ---------------------------------------------------------------

MANIFEST_NAME = "model.manifest"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "none" if v is None else str(v)


def save_checkpoint(directory: str | os.PathLike, model: MlGcnModel,
                    vocab: LabelVocabulary | None = None) -> list[str]:
    """Write each layer weight, the adjacency and embedding, plus a text manifest.

    Returns the written paths.
    """
    os.makedirs(directory, exist_ok=True)
    paths = []
    for l, W in enumerate(model.weights):
        path = os.path.join(directory, f"layer_{l}.mlgf")
        write_matrix(path, W.data)
        paths.append(path)
    for name, arr in (("adjacency", model.adjacency), ("embedding", model.embedding)):
        path = os.path.join(directory, f"{name}.mlgf")
        write_matrix(path, arr)
        paths.append(path)

    info = model.graph_info
    lines = [
        f"layer_dims = {_fmt(model.config.layer_dims)}",
        f"slope = {_fmt(float(model.config.slope))}",
        f"final_activation = {_fmt(model.config.final_activation)}",
        f"seed = {model.config.seed}",
        f"tau = {_fmt(info.get('tau'))}",
        f"p = {_fmt(info.get('p'))}",
        f"normalized = {_fmt(info.get('normalized', True))}",
        f"embedding_source = {_fmt(info.get('embedding_source'))}",
        f"num_labels = {model.num_labels}",
        f"input_dim = {model.embedding.shape[1]}",
    ]
    if vocab is not None:
        lines.append("[vocabulary]")
        lines.extend(vocab.names)
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    paths.append(path)
    return paths


def _parse_value(raw: str):
    raw = raw.strip()
    if raw == "none":
        return None
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def read_checkpoint_manifest(path: str | os.PathLike) -> tuple[dict, LabelVocabulary | None]:
    entries, names, in_vocab = {}, [], False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if in_vocab:
                if line:
                    names.append(line)
                continue
            if not line.strip():
                continue
            if line.strip() == "[vocabulary]":
                in_vocab = True
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected 'key = value', got {line!r}", lineno, path)
            entries[key.strip()] = value.strip()
    return entries, (LabelVocabulary(tuple(names)) if names else None)


def load_checkpoint(directory: str | os.PathLike) -> tuple[MlGcnModel, LabelVocabulary | None]:
    entries, vocab = read_checkpoint_manifest(os.path.join(directory, MANIFEST_NAME))
    dims = tuple(int(d) for d in entries["layer_dims"].split(","))
    config = ModelConfig(
        layer_dims=dims,
        slope=float(entries["slope"]),
        final_activation=entries.get("final_activation") == "true",
        seed=int(entries.get("seed", 0)),
    )
    weights = tuple(
        Tensor(read_matrix(os.path.join(directory, f"layer_{l}.mlgf")), requires_grad=True)
        for l in range(len(dims))
    )
    A = read_matrix(os.path.join(directory, "adjacency.mlgf"))
    Z = read_matrix(os.path.join(directory, "embedding.mlgf"))
    A.setflags(write=False)
    Z.setflags(write=False)
    info = {k: _parse_value(entries[k]) for k in ("tau", "p", "normalized", "embedding_source") if k in entries}
    expected = (Z.shape[1],) + dims
    for l, W in enumerate(weights):
        if W.shape != (expected[l], expected[l + 1]):
            raise DimensionError(f"layer_{l}: shape {W.shape}, manifest implies {(expected[l], expected[l + 1])}")
    return MlGcnModel(weights, A, Z, config, info), vocab
