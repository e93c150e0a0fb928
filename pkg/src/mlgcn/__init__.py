"""Multi-label classifier learning with graph convolutions over a label co-occurrence graph.

Label word embeddings are propagated through stacked graph-convolution
layers over a re-weighted conditional-probability graph; the output rows
are linear classifiers applied to precomputed image features.
"""

from .embeddings import (
    ONE_HOT,
    EmbeddingMatrix,
    LabelVocabulary,
    WordVectorTable,
    build_label_embeddings,
    load_vocabulary,
    load_word_vectors,
)
from .label_graph import (
    CooccurrenceStats,
    CorrelationMatrix,
    LabelGraph,
    Stage,
    binarize,
    build_label_graph,
    conditional_probability,
    count_cooccurrence,
    normalize_adjacency,
    reweight,
)
from .metrics import (
    MetricsReport,
    Threshold,
    TopK,
    average_precision,
    decide_labels,
    evaluate_scores,
    knn_retrieve,
    mean_average_precision,
    prf1,
)
from .model import (
    MlGcnModel,
    ModelConfig,
    bce_loss,
    generate_classifiers,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    score_features,
)
from .synthetic import SyntheticConfig, generate_synthetic, train_test_split
from .tensor import Tape, Tensor, backward
from .trainer import TrainConfig, TrainHistory, lr_at_epoch, sgd_update, train

__version__ = "0.1.0"
