"""Grid sweeps over graph and model hyper-parameters.

Each grid point builds its own label graph from the training annotations,
trains a fresh model and evaluates it on held-out data.  A point whose
training blows up is recorded as diverged rather than aborting the sweep.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset_io import FeatureDataset
from .embeddings import EmbeddingMatrix
from .errors import TrainingError
from .label_graph import build_label_graph
from .metrics import MetricsReport, Threshold, TopK, evaluate_scores
from .model import ModelConfig, init_model, score_features
from .trainer import TrainConfig, train

logger = logging.getLogger(__name__)

TAU_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
P_GRID = tuple(round(0.1 * i, 1) for i in range(0, 11))


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    p: float
    layer_dims: tuple[int, ...]
    embedding: str


@dataclass(frozen=True)
class SweepResult:
    point: SweepPoint
    status: str
    degenerate_diagonal: bool
    num_edges: int
    final_loss: float
    report: MetricsReport | None
    report_top3: MetricsReport | None


def run_point(point: SweepPoint, train_set: FeatureDataset, test_set: FeatureDataset,
              embedding: EmbeddingMatrix, model_config: ModelConfig, train_config: TrainConfig,
              normalize: bool = True) -> SweepResult:
    graph = build_label_graph(train_set.samples, train_set.num_labels, point.tau, point.p)
    degenerate = bool(np.any(np.diag(graph.reweighted.values) == 0.0))
    edges = int(graph.binary.values.sum())
    cfg = replace(model_config, layer_dims=point.layer_dims)
    model = init_model(embedding, graph.adjacency(normalize), cfg, feature_dim=train_set.feature_dim)
    try:
        model, history = train(model, train_set, train_config)
    except TrainingError as exc:
        logger.warning("sweep point %s diverged: %s", point, exc)
        return SweepResult(point, "diverged", degenerate, edges, float("nan"), None, None)
    scores = score_features(model, test_set.features)
    truth = test_set.label_matrix()
    return SweepResult(
        point, "ok", degenerate, edges, history.losses[-1],
        evaluate_scores(scores, truth, Threshold(0.5)),
        evaluate_scores(scores, truth, TopK(3)),
    )


def sweep(train_set: FeatureDataset, test_set: FeatureDataset,
          embeddings: Mapping[str, EmbeddingMatrix], taus: Sequence[float] = (0.4,),
          ps: Sequence[float] = (0.2,), depths: Sequence[Sequence[int]] = ((1024, 2048),),
          model_config: ModelConfig = ModelConfig(), train_config: TrainConfig = TrainConfig(),
          normalize: bool = True, workers: int = 1) -> list[SweepResult]:
    """Evaluate every combination of embedding, depth, tau and p, in that nesting order.

    Results come back in grid order regardless of ``workers``.
    """
    points = [
        SweepPoint(float(t), float(p), tuple(int(d) for d in dims), name)
        for name, dims, t, p in itertools.product(embeddings, depths, taus, ps)
    ]

    def run(point):
        return run_point(point, train_set, test_set, embeddings[point.embedding],
                         model_config, train_config, normalize)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, points))
    return [run(pt) for pt in points]


TABLE_COLUMNS = (
    "embedding", "layer_dims", "tau", "p", "status", "degenerate_diagonal", "num_edges", "final_loss",
    "mAP", "CP", "CR", "CF1", "OP", "OR", "OF1",
    "top3_CP", "top3_CR", "top3_CF1", "top3_OP", "top3_OR", "top3_OF1",
)


def results_table(results: Sequence[SweepResult]) -> str:
    """Tab-separated table, one row per grid point, header first."""
    lines = ["\t".join(TABLE_COLUMNS)]
    for r in results:
        pt = r.point
        row = [pt.embedding, "-".join(str(d) for d in pt.layer_dims), f"{pt.tau:g}", f"{pt.p:g}",
               r.status, "yes" if r.degenerate_diagonal else "no", str(r.num_edges), f"{r.final_loss:.6f}"]
        for rep, names in ((r.report, ("mAP", "CP", "CR", "CF1", "OP", "OR", "OF1")),
                           (r.report_top3, ("CP", "CR", "CF1", "OP", "OR", "OF1"))):
            row += [f"{getattr(rep, n):.4f}" if rep is not None else "nan" for n in names]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
