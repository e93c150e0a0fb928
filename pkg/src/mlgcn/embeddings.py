"""Word-vector tables and the label representation matrix fed to the first GCN layer."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, ParseError

ONE_HOT = "one-hot"

_TOKEN_SPLIT = re.compile(r"[\s\-]+")


def tokenize(name: str) -> list[str]:
    """Lowercase a label name and split it on whitespace and hyphens."""
    return [t for t in _TOKEN_SPLIT.split(name.lower()) if t]


@dataclass(frozen=True)
class WordVectorTable:
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[token]

    def __len__(self) -> int:
        return len(self.vectors)

    @classmethod
    def from_dict(cls, vectors: Mapping[str, Iterable[float]]) -> "WordVectorTable":
        table = {}
        dim = None
        for token, vec in vectors.items():
            arr = np.array(vec, dtype=np.float64)
            if dim is None:
                dim = arr.shape[0]
            if arr.shape != (dim,):
                raise DataError(f"token {token!r}: dimension {arr.shape[0]} differs from {dim}")
            arr.setflags(write=False)
            table[token.lower()] = arr
        if dim is None:
            raise DataError("word-vector table is empty")
        return cls(dim=dim, vectors=table)


def load_word_vectors(path: str | os.PathLike, tokens: set[str] | None = None) -> WordVectorTable:
    """Read a GloVe-style text table: ``token v1 v2 ... vd`` per line.

    The dimension is fixed by the first non-blank line.  When ``tokens`` is
    given only those entries are kept (other lines are still checked).
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError("first entry carries no vector values", lineno, path)
            if len(values) != dim:
                raise ParseError(f"expected {dim} values for {token!r}, found {len(values)}", lineno, path)
            key = token.lower()
            if tokens is not None and key not in tokens:
                continue
            try:
                arr = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric value for {token!r}: {exc}", lineno, path) from None
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"non-finite value for {token!r}", lineno, path)
            arr.setflags(write=False)
            vectors.setdefault(key, arr)
    if dim is None:
        raise DataError(f"{path}: word-vector file is empty")
    return WordVectorTable(dim=dim, vectors=vectors)


@dataclass(frozen=True)
class LabelVocabulary:
    names: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        index = {}
        for i, name in enumerate(names):
            if not name:
                raise DataError(f"label {i} has an empty name")
            if name in index:
                raise DataError(f"duplicate label name {name!r} at positions {index[name]} and {i}")
            index[name] = i
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __getitem__(self, i: int) -> str:
        return self.names[i]

    def lookup(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise DataError(f"unknown label name {name!r}") from None

    def tokens(self) -> set[str]:
        return {t for name in self.names for t in tokenize(name)}


def load_vocabulary(path: str | os.PathLike) -> LabelVocabulary:
    """One label name per line; blank lines are ignored."""
    with open(path, encoding="utf-8") as fh:
        names = [line.strip() for line in fh if line.strip()]
    if not names:
        raise DataError(f"{path}: vocabulary file is empty")
    return LabelVocabulary(tuple(names))


@dataclass(frozen=True)
class EmbeddingMatrix:
    Z: np.ndarray
    source: str

    @property
    def dim(self) -> int:
        return self.Z.shape[1]


def build_label_embeddings(vocab: LabelVocabulary, table: WordVectorTable | str) -> EmbeddingMatrix:
    """Label representation matrix, one row per label in vocabulary order.

    With a word-vector table, a label's row is the mean of its tokens'
    vectors.  Passing ``"one-hot"`` returns the ``C x C`` identity instead.
    """
    if isinstance(table, str):
        if table != ONE_HOT:
            raise DataError(f"unknown embedding mode {table!r}")
        Z = np.eye(len(vocab))
        Z.setflags(write=False)
        return EmbeddingMatrix(Z, ONE_HOT)

    rows = []
    for name in vocab.names:
        toks = tokenize(name)
        if not toks:
            raise DataError(f"label {name!r} has no tokens")
        missing = [t for t in toks if t not in table]
        if missing:
            raise DataError(f"label {name!r}: token {missing[0]!r} not in word-vector table")
        rows.append(np.mean([table[t] for t in toks], axis=0))
    Z = np.array(rows, dtype=np.float64)
    Z.setflags(write=False)
    return EmbeddingMatrix(Z, "word-vectors")


def write_word_vectors(path: str | os.PathLike, table: WordVectorTable) -> None:
    """Write a table in the text format read by :func:`load_word_vectors` (lossless)."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(table.vectors):
            fh.write(token + " " + " ".join(f"{v:.17g}" for v in table.vectors[token]) + "\n")
