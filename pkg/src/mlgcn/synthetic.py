"""Seeded synthetic datasets with planted label co-occurrence.

Each label is switched on independently with probability ``base_rate``.
Every planted pair ``(leader, follower)`` then forces the follower on with
probability ``strength`` whenever the leader is present, so

    P(follower | leader) = strength + (1 - strength) * base_rate.

A sample's feature vector is the sum of its labels' signature directions
(orthonormal), a shared background direction of unit length, and isotropic
Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset_io import AnnotatedSample, FeatureDataset
from .embeddings import LabelVocabulary, WordVectorTable
from .errors import ConfigurationError


@dataclass(frozen=True)
class SyntheticConfig:
    num_labels: int = 10
    feature_dim: int = 64
    num_samples: int = 2500
    strength: float = 0.9
    base_rate: float = 0.15
    noise: float = 0.2
    embedding_dim: int = 16
    seed: int = 0
    pairs: tuple[tuple[int, int], ...] | None = None

    def planted_pairs(self) -> tuple[tuple[int, int], ...]:
        if self.pairs is not None:
            return tuple(self.pairs)
        return tuple((i, i + 1) for i in range(0, self.num_labels - 1, 2))

    def planted_conditional(self, leader: int, follower: int) -> float:
        """Probability of ``follower`` given ``leader`` under the generator."""
        if (leader, follower) in self.planted_pairs():
            return self.strength + (1.0 - self.strength) * self.base_rate
        return self.base_rate


@dataclass(frozen=True)
class SyntheticData:
    dataset: FeatureDataset
    word_vectors: WordVectorTable
    signatures: np.ndarray = field(repr=False)
    config: SyntheticConfig


def label_names(num_labels: int) -> tuple[str, ...]:
    return tuple(f"label{i}" for i in range(num_labels))


def generate_synthetic(config: SyntheticConfig = SyntheticConfig()) -> SyntheticData:
    C, D, N = config.num_labels, config.feature_dim, config.num_samples
    if C < 2:
        raise ConfigurationError(f"need at least 2 labels, got {C}")
    if D < C + 1:
        raise ConfigurationError(f"feature_dim must exceed num_labels, got D={D}, C={C}")
    if not 0.0 <= config.strength <= 1.0 or not 0.0 <= config.base_rate <= 1.0:
        raise ConfigurationError("strength and base_rate must lie in [0, 1]")
    if config.noise < 0:
        raise ConfigurationError(f"noise must be non-negative, got {config.noise}")
    for a, b in config.planted_pairs():
        if not (0 <= a < C and 0 <= b < C) or a == b:
            raise ConfigurationError(f"invalid planted pair ({a}, {b})")

    rng = np.random.default_rng(config.seed)
    basis, _ = np.linalg.qr(rng.standard_normal((D, D)))
    signatures = basis[:, :C].T.copy()
    background = basis[:, C]

    Y = rng.random((N, C)) < config.base_rate
    for leader, follower in config.planted_pairs():
        forced = rng.random(N) < config.strength
        Y[:, follower] |= Y[:, leader] & forced

    feats = Y.astype(np.float64) @ signatures + background
    if config.noise > 0:
        feats = feats + config.noise * rng.standard_normal((N, D))
    feats.setflags(write=False)

    vocab = LabelVocabulary(label_names(C))
    samples = tuple(
        AnnotatedSample(f"s{n:06d}", frozenset(int(i) for i in np.flatnonzero(Y[n])))
        for n in range(N)
    )
    vectors = rng.standard_normal((C, config.embedding_dim))
    table = WordVectorTable.from_dict(dict(zip(vocab.names, vectors)))
    return SyntheticData(FeatureDataset(samples, feats, vocab), table, signatures, config)


def train_test_split(data: FeatureDataset, num_train: int) -> tuple[FeatureDataset, FeatureDataset]:
    """Leading ``num_train`` samples for training, the rest for testing."""
    if not 0 < num_train < len(data):
        raise ConfigurationError(f"num_train must lie in (0, {len(data)}), got {num_train}")
    return data.subset(range(num_train)), data.subset(range(num_train, len(data)))
