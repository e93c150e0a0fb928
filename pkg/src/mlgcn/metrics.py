"""Multi-label evaluation: per-class and overall P/R/F1, mean average precision, k-NN retrieval.

Ties are broken by ascending index everywhere: label index for top-k
decisions, sample index for ranking, gallery index for retrieval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError
from .tensor import Tensor, _stable_sigmoid


@dataclass(frozen=True)
class Threshold:
    t: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ConfigurationError(f"threshold must lie in (0, 1), got {self.t}")

    def __str__(self) -> str:
        return f"threshold:{self.t:g}"


@dataclass(frozen=True)
class TopK:
    k: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"k must be at least 1, got {self.k}")

    def __str__(self) -> str:
        return f"topk:{self.k}"


def parse_rule(text: str) -> Threshold | TopK:
    """``"threshold:0.5"`` or ``"topk:3"``."""
    kind, _, value = text.partition(":")
    try:
        if kind == "threshold":
            return Threshold(float(value) if value else 0.5)
        if kind == "topk":
            return TopK(int(value) if value else 3)
    except ValueError:
        pass
    raise ConfigurationError(f"cannot parse decision rule {text!r}; use threshold:T or topk:K")


@dataclass(frozen=True)
class PredictionSet:
    scores: np.ndarray
    decided: np.ndarray
    rule: Threshold | TopK


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def decide_labels(scores, rule: Threshold | TopK = Threshold()) -> PredictionSet:
    """Turn raw scores (logits) into binary decisions.

    Threshold rule: positive iff ``sigmoid(score) > t``.  Top-k rule: the
    ``k`` highest scores in each row.
    """
    S = np.atleast_2d(_as_array(scores))
    if isinstance(rule, Threshold):
        decided = (_stable_sigmoid(S) > rule.t).astype(np.int8)
    elif isinstance(rule, TopK):
        k = min(rule.k, S.shape[1])
        order = np.argsort(-S, axis=1, kind="stable")[:, :k]
        decided = np.zeros(S.shape, dtype=np.int8)
        np.put_along_axis(decided, order, 1, axis=1)
    else:
        raise ConfigurationError(f"unknown decision rule {rule!r}")
    return PredictionSet(S, decided, rule)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _f1(p, r) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def prf1(pred: PredictionSet | np.ndarray, truth, mode: str = "overall") -> tuple[float, float, float]:
    """Precision, recall and F1 over ``B x C`` decisions.

    ``mode="per-class"`` averages per-label precision/recall over all labels
    (0/0 counts as 0); ``mode="overall"`` pools every (sample, label) decision.
    F1 is the harmonic mean of the returned precision and recall.
    """
    D = np.atleast_2d(pred.decided if isinstance(pred, PredictionSet) else np.asarray(pred)).astype(bool)
    T = np.atleast_2d(np.asarray(truth)).astype(bool)
    if D.shape != T.shape:
        raise DimensionError(f"decisions {D.shape} vs truth {T.shape}")
    tp = (D & T).sum(axis=0)
    fp = (D & ~T).sum(axis=0)
    fn = (~D & T).sum(axis=0)
    if mode == "per-class":
        P = float(np.mean(_ratio(tp, tp + fp)))
        R = float(np.mean(_ratio(tp, tp + fn)))
    elif mode == "overall":
        P = float(_ratio(tp.sum(), tp.sum() + fp.sum()))
        R = float(_ratio(tp.sum(), tp.sum() + fn.sum()))
    else:
        raise ConfigurationError(f"mode must be 'per-class' or 'overall', got {mode!r}")
    return P, R, _f1(P, R)


def average_precision(scores, relevant) -> float:
    """All-points AP: mean precision at the rank of each relevant item.

    Items are ranked by descending score, ties by ascending position.
    """
    s = _as_array(scores).reshape(-1)
    rel = np.asarray(relevant).astype(bool).reshape(-1)
    if not rel.any():
        raise DataError("average precision is undefined without positives")
    order = np.argsort(-s, kind="stable")
    hits = rel[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def mean_average_precision(scores, truth) -> tuple[float, np.ndarray]:
    """mAP over labels with at least one positive; per-class AP is NaN elsewhere."""
    S = np.atleast_2d(_as_array(scores))
    T = np.atleast_2d(np.asarray(truth)).astype(bool)
    if S.shape != T.shape:
        raise DimensionError(f"scores {S.shape} vs truth {T.shape}")
    has_pos = T.any(axis=0)
    if not has_pos.any():
        raise DataError("no positive labels anywhere; mAP is undefined")
    ap = np.full(S.shape[1], np.nan)
    for c in np.flatnonzero(has_pos):
        ap[c] = average_precision(S[:, c], T[:, c])
    return float(np.mean(ap[has_pos])), ap


METRIC_NAMES = ("mAP", "CP", "CR", "CF1", "OP", "OR", "OF1")


@dataclass(frozen=True)
class MetricsReport:
    CP: float
    CR: float
    CF1: float
    OP: float
    OR: float
    OF1: float
    mAP: float
    per_class_ap: np.ndarray = field(repr=False, compare=False)
    rule: str = "threshold:0.5"

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_text(self) -> str:
        """Flat ``name value`` lines, four decimal places."""
        lines = [f"rule {self.rule}"]
        lines += [f"{name} {getattr(self, name):.4f}" for name in METRIC_NAMES]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        entries = dict(line.split(None, 1) for line in text.splitlines() if line.strip())
        rule = entries.pop("rule", "threshold:0.5")
        values = {k: float(v) for k, v in entries.items()}
        return cls(per_class_ap=np.array([]), rule=rule, **values)


def evaluate_scores(scores, truth, rule: Threshold | TopK = Threshold()) -> MetricsReport:
    pred = decide_labels(scores, rule)
    CP, CR, CF1 = prf1(pred, truth, "per-class")
    OP, OR, OF1 = prf1(pred, truth, "overall")
    mAP, ap = mean_average_precision(pred.scores, truth)
    return MetricsReport(CP, CR, CF1, OP, OR, OF1, mAP, ap, str(rule))


def knn_retrieve(query, gallery: Sequence | np.ndarray, k: int = 5) -> list[int]:
    """Indices of the ``k`` gallery vectors closest to ``query`` (Euclidean), nearest first."""
    q = _as_array(query).reshape(-1)
    G = np.stack([_as_array(g) for g in gallery]) if not isinstance(gallery, np.ndarray) else np.asarray(gallery, dtype=np.float64)
    if G.ndim != 2 or G.shape[1] != q.shape[0]:
        raise DimensionError(f"query of dimension {q.shape[0]} vs gallery of shape {G.shape}")
    if not 1 <= k <= G.shape[0]:
        raise ConfigurationError(f"k must lie in [1, {G.shape[0]}], got {k}")
    dist = np.sqrt(((G - q) ** 2).sum(axis=1))
    return [int(i) for i in np.argsort(dist, kind="stable")[:k]]


def retrieval_distances(query, gallery, indices: Sequence[int]) -> np.ndarray:
    q = _as_array(query).reshape(-1)
    G = np.asarray(gallery, dtype=np.float64)
    return np.sqrt(((G[list(indices)] - q) ** 2).sum(axis=1))
