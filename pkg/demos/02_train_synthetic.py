"""
Training classifiers on a synthetic dataset
===========================================

Generate data with planted label pairs, build the graph from the training
split, learn the GCN weights for 30 epochs and score the held-out split.
Takes a few seconds on one core.
"""

import time

from mlgcn import (
    ModelConfig,
    SyntheticConfig,
    TrainConfig,
    build_label_embeddings,
    build_label_graph,
    evaluate_scores,
    generate_synthetic,
    init_model,
    score_features,
    train,
    train_test_split,
)
from mlgcn.metrics import TopK

data = generate_synthetic(SyntheticConfig(num_labels=10, feature_dim=64, num_samples=2500, seed=0))
train_set, test_set = train_test_split(data.dataset, 2000)
vocab = data.dataset.vocabulary
print(f"{len(train_set)} training samples, {len(test_set)} test samples, {len(vocab)} labels")

# The generator plants (label0, label1), (label2, label3), ... so the graph
# should link each pair in the "follower -> leader" direction.
graph = build_label_graph(train_set.samples, len(vocab), tau=0.4, p=0.2)
edges = [(vocab.names[i], vocab.names[j]) for i, j in zip(*graph.binary.values.nonzero())]
print("edges:", edges)

emb = build_label_embeddings(vocab, data.word_vectors)
model = init_model(emb, graph.normalized, ModelConfig(layer_dims=(1024, 64), seed=0), feature_dim=64)

start = time.perf_counter()
model, history = train(model, train_set, TrainConfig.desk_scale(epochs=30))
print(f"trained in {time.perf_counter() - start:.1f}s")
for rec in history.records[::6] + [history.records[-1]]:
    print(f"  epoch {rec.epoch:2d}  lr {rec.lr:.4g}  loss {rec.loss:.4f}")

scores = score_features(model, test_set.features)
truth = test_set.label_matrix()
print(evaluate_scores(scores, truth).to_text())
print(evaluate_scores(scores, truth, TopK(3)).to_text())
