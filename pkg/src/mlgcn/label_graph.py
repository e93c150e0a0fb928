"""Label correlation matrix built from co-occurrence statistics.

The pipeline runs in five stages::

    samples -> (M, N) -> P -> A -> A' -> A_hat
               counts   cond. binary reweighted normalized

``P[i, j]`` is the probability that label ``j`` is present given label ``i``
is, so ``P`` and everything derived from it is generally asymmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, DataError

DEFAULT_TAU = 0.4
DEFAULT_P = 0.2
NORMALIZATION_EPS = 1e-6


class Stage(str, Enum):
    CONDITIONAL = "conditional"
    BINARY = "binary"
    REWEIGHTED = "reweighted"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class CooccurrenceStats:
    """Pair counts ``M`` (zero diagonal) and per-label counts ``N``."""

    M: np.ndarray
    N: np.ndarray

    @property
    def num_labels(self) -> int:
        return self.N.shape[0]


@dataclass(frozen=True)
class CorrelationMatrix:
    values: np.ndarray
    stage: Stage
    tau: float | None = None
    p: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def num_labels(self) -> int:
        return self.values.shape[0]

    def has_zero_diagonal(self) -> bool:
        return bool(np.all(np.diag(self.values) == 0.0))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _sample_labels(sample):
    if hasattr(sample, "labels"):
        return getattr(sample, "id", None), sample.labels
    return None, sample


def count_cooccurrence(samples: Iterable, num_labels: int) -> CooccurrenceStats:
    """Count label occurrences and pairwise co-occurrences.

    ``samples`` holds label-index collections, or objects with ``labels``
    (and optionally ``id``) attributes such as ``AnnotatedSample``.
    """
    C = int(num_labels)
    rows = []
    for pos, sample in enumerate(samples):
        sid, labels = _sample_labels(sample)
        idx = sorted(set(int(i) for i in labels))
        if idx and (idx[0] < 0 or idx[-1] >= C):
            bad = idx[0] if idx[0] < 0 else idx[-1]
            name = sid if sid is not None else f"#{pos}"
            raise DataError(f"sample {name}: label index {bad} outside [0, {C})")
        row = np.zeros(C, dtype=np.int64)
        row[idx] = 1
        rows.append(row)
    Y = np.array(rows, dtype=np.int64).reshape(len(rows), C)
    M = Y.T @ Y
    N = np.diag(M).copy()
    np.fill_diagonal(M, 0)
    return CooccurrenceStats(M=_frozen(M), N=_frozen(N))


def conditional_probability(stats: CooccurrenceStats) -> CorrelationMatrix:
    """``P[i, j] = M[i, j] / N[i]``; rows of labels that never occur are zero."""
    M = stats.M.astype(np.float64)
    N = stats.N.astype(np.float64)
    P = np.zeros_like(M)
    seen = N > 0
    P[seen] = M[seen] / N[seen, None]
    np.fill_diagonal(P, 0.0)
    return CorrelationMatrix(_frozen(P), Stage.CONDITIONAL)


def binarize(P: CorrelationMatrix, tau: float = DEFAULT_TAU) -> CorrelationMatrix:
    """Keep the edges whose conditional probability reaches ``tau``."""
    if P.stage is not Stage.CONDITIONAL:
        raise ConfigurationError(f"binarize expects a conditional matrix, got stage {P.stage.value}")
    if not 0.0 < tau <= 1.0:
        raise ConfigurationError(f"tau must lie in (0, 1], got {tau}")
    A = (P.values >= tau).astype(np.float64)
    return CorrelationMatrix(_frozen(A), Stage.BINARY, tau=float(tau))


def reweight(A: CorrelationMatrix, p: float = DEFAULT_P) -> CorrelationMatrix:
    """Give each node self-weight ``1 - p`` and spread ``p`` over its neighbours.

    A node without neighbours keeps all of its weight (``A'[i, i] = 1``), so
    every row sums to one.
    """
    if A.stage is not Stage.BINARY:
        raise ConfigurationError(f"reweight expects a binary matrix, got stage {A.stage.value}")
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"p must lie in [0, 1], got {p}")
    edges = A.values.copy()
    np.fill_diagonal(edges, 0.0)
    degree = edges.sum(axis=1)
    out = np.zeros_like(edges)
    linked = degree > 0
    out[linked] = p * edges[linked] / degree[linked, None]
    diag = np.where(linked, 1.0 - p, 1.0)
    out[np.diag_indices_from(out)] = diag
    return CorrelationMatrix(_frozen(out), Stage.REWEIGHTED, tau=A.tau, p=float(p))


def normalize_adjacency(Aprime: CorrelationMatrix, eps: float = NORMALIZATION_EPS) -> CorrelationMatrix:
    """Symmetric degree normalization ``D^-1/2 A' D^-1/2`` with ``D_ii = sum_j A'_ij + eps``."""
    if Aprime.stage is not Stage.REWEIGHTED:
        raise ConfigurationError(
            f"normalize_adjacency expects a reweighted matrix, got stage {Aprime.stage.value}"
        )
    d = 1.0 / np.sqrt(Aprime.values.sum(axis=1) + eps)
    Ahat = d[:, None] * Aprime.values * d[None, :]
    return CorrelationMatrix(_frozen(Ahat), Stage.NORMALIZED, tau=Aprime.tau, p=Aprime.p)


@dataclass(frozen=True)
class LabelGraph:
    """Every intermediate of one pipeline run, plus the matrix a model consumes."""

    stats: CooccurrenceStats
    conditional: CorrelationMatrix
    binary: CorrelationMatrix
    reweighted: CorrelationMatrix
    normalized: CorrelationMatrix

    @property
    def tau(self) -> float:
        return self.binary.tau

    @property
    def p(self) -> float:
        return self.reweighted.p

    def adjacency(self, normalize: bool = True) -> CorrelationMatrix:
        return self.normalized if normalize else self.reweighted

    def stages(self) -> dict[str, np.ndarray]:
        return {
            "P": self.conditional.values,
            "A": self.binary.values,
            "Aprime": self.reweighted.values,
            "Ahat": self.normalized.values,
        }


def build_label_graph(samples: Iterable, num_labels: int, tau: float = DEFAULT_TAU,
                      p: float = DEFAULT_P) -> LabelGraph:
    stats = count_cooccurrence(samples, num_labels)
    P = conditional_probability(stats)
    A = binarize(P, tau)
    Aprime = reweight(A, p)
    return LabelGraph(stats, P, A, Aprime, normalize_adjacency(Aprime))
