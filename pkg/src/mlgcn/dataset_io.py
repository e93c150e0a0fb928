"""Annotations, feature files and the ``MLGF`` binary matrix format.

Binary layout (all integers unsigned 32-bit little-endian)::

    offset 0   b"MLGF"
    offset 4   version (1)
    offset 8   rank r
    offset 12  r dimensions
    then       prod(dims) float64 values, little-endian, row-major
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import LabelVocabulary
from .errors import DataError, DimensionError, FormatError, NonFiniteError, ParseError
from .tensor import Tensor, global_max_pool

MAGIC = b"MLGF"
VERSION = 1
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class AnnotatedSample:
    id: str
    labels: frozenset[int]


@dataclass(frozen=True)
class FeatureDataset:
    samples: tuple[AnnotatedSample, ...]
    features: np.ndarray
    vocabulary: LabelVocabulary

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionError(f"features must be N x D, got shape {self.features.shape}")
        if self.features.shape[0] != len(self.samples):
            raise DataError(
                f"{self.features.shape[0]} feature rows for {len(self.samples)} annotated samples"
            )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_labels(self) -> int:
        return len(self.vocabulary)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def label_matrix(self) -> np.ndarray:
        """``N x C`` binary targets."""
        Y = np.zeros((len(self.samples), self.num_labels))
        for row, s in enumerate(self.samples):
            Y[row, sorted(s.labels)] = 1.0
        return Y

    def subset(self, indices: Sequence[int]) -> "FeatureDataset":
        idx = np.asarray(indices, dtype=np.intp)
        feats = self.features[idx]
        feats.setflags(write=False)
        return FeatureDataset(tuple(self.samples[i] for i in idx), feats, self.vocabulary)


# -- annotations ---------------------------------------------------------------

def parse_annotation_line(line: str, vocab: LabelVocabulary, lineno: int = 0, path=None) -> AnnotatedSample:
    text = line.rstrip("\r\n")
    sid, _, rest = text.partition("\t")
    sid = sid.strip()
    if not sid:
        raise ParseError("missing sample id", lineno, path)
    labels = set()
    for name in rest.split(","):
        name = name.strip()
        if not name:
            continue
        if name not in vocab.index:
            raise ParseError(f"sample {sid}: unknown label name {name!r}", lineno, path)
        labels.add(vocab.index[name])
    return AnnotatedSample(sid, frozenset(labels))


def load_annotations(path: str | os.PathLike, vocab: LabelVocabulary) -> list[AnnotatedSample]:
    """Read ``id<TAB>label,label,...`` records, one per non-blank line."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            samples.append(parse_annotation_line(line, vocab, lineno, path))
    return samples


def write_annotations(path: str | os.PathLike, samples: Sequence[AnnotatedSample], vocab: LabelVocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(f"{s.id}\t{','.join(vocab.names[i] for i in sorted(s.labels))}\n")


def write_vocabulary(path: str | os.PathLike, vocab: LabelVocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{name}\n" for name in vocab.names)


# -- binary matrices -----------------------------------------------------------

def encode_matrix(array) -> bytes:
    arr = array.data if isinstance(array, Tensor) else np.asarray(array, dtype=np.float64)
    if arr.ndim == 0:
        raise DimensionError("cannot store a rank-0 array; reshape to (1,)")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("refusing to write non-finite values")
    header = MAGIC + _U32.pack(VERSION) + _U32.pack(arr.ndim)
    header += b"".join(_U32.pack(int(d)) for d in arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def decode_matrix(buf: bytes, path=None) -> np.ndarray:
    def need(offset: int, count: int, what: str) -> None:
        if len(buf) < offset + count:
            raise FormatError(f"truncated {what}: need {count} bytes, {len(buf) - offset} left", offset, path)

    need(0, 4, "magic")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0, path)
    need(4, 4, "version")
    version = _U32.unpack_from(buf, 4)[0]
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4, path)
    need(8, 4, "rank")
    rank = _U32.unpack_from(buf, 8)[0]
    if rank == 0:
        raise FormatError("rank must be at least 1", 8, path)
    need(12, 4 * rank, "dimensions")
    dims = tuple(_U32.unpack_from(buf, 12 + 4 * k)[0] for k in range(rank))
    for k, d in enumerate(dims):
        if d == 0:
            raise FormatError(f"dimension {k} is zero", 12 + 4 * k, path)
    start = 12 + 4 * rank
    nbytes = 8 * int(np.prod(dims, dtype=np.int64))
    need(start, nbytes, "payload")
    if len(buf) != start + nbytes:
        raise FormatError(f"{len(buf) - start - nbytes} trailing bytes after payload", start + nbytes, path)
    arr = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=start).astype(np.float64).reshape(dims)
    finite = np.isfinite(arr).reshape(-1)
    if not finite.all():
        first = int(np.argmin(finite))
        raise FormatError("non-finite value in payload", start + 8 * first, path)
    return arr


def write_matrix(path: str | os.PathLike, array) -> None:
    data = encode_matrix(array)
    with open(path, "wb") as fh:
        fh.write(data)


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_matrix(fh.read(), path)


def write_csv(path: str | os.PathLike, array, header: Sequence[str] | None = None) -> None:
    """Human-readable mirror of a matrix, 17 significant digits per value.

    Arrays of rank above 2 are flattened to ``shape[0]`` rows; the first
    line records the true shape.
    """
    arr = np.asarray(array.data if isinstance(array, Tensor) else array, dtype=np.float64)
    rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# shape: " + ",".join(str(d) for d in arr.shape) + "\n")
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_csv(path: str | os.PathLike, has_header: bool = False) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# shape:"):
            raise ParseError("missing '# shape:' line", 1, path)
        shape = tuple(int(d) for d in first.split(":", 1)[1].split(","))
        if has_header:
            fh.readline()
        values = [float(v) for line in fh if line.strip() for v in line.split(",")]
    return np.array(values, dtype=np.float64).reshape(shape)


# -- features ------------------------------------------------------------------

def pool_feature_maps(maps: np.ndarray) -> np.ndarray:
    """Global max-pool an ``N x D x h x w`` stack to ``N x D``."""
    return np.stack([global_max_pool(Tensor._wrap(m)).data for m in maps])


def load_features(path: str | os.PathLike) -> np.ndarray:
    """``N x D`` feature vectors, or ``N x D x h x w`` maps pooled on load."""
    arr = read_matrix(path)
    if arr.ndim == 4:
        arr = pool_feature_maps(arr)
    elif arr.ndim != 2:
        raise DimensionError(f"{path}: features must have rank 2 or 4, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def load_dataset(annotations: str | os.PathLike, features: str | os.PathLike,
                 vocab: LabelVocabulary) -> FeatureDataset:
    """Pair annotation records with feature rows by position."""
    samples = load_annotations(annotations, vocab)
    return FeatureDataset(tuple(samples), load_features(features), vocab)


def save_dataset(directory: str | os.PathLike, name: str, dataset: FeatureDataset) -> tuple[str, str]:
    ann = os.path.join(directory, f"{name}.tsv")
    feat = os.path.join(directory, f"{name}.mlgf")
    write_annotations(ann, dataset.samples, dataset.vocabulary)
    write_matrix(feat, dataset.features)
    return ann, feat
