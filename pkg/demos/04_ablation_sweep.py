"""
Sweeping tau and p
==================

Train a small model at every point of the tau and p grids and print the
result tables.  Epochs and hidden width are cut down so the whole sweep
runs in seconds; the tables have the same columns as a full-size run.
"""

from mlgcn import ModelConfig, SyntheticConfig, TrainConfig, generate_synthetic, train_test_split
from mlgcn.ablation import P_GRID, TAU_GRID, results_table, sweep
from mlgcn.embeddings import ONE_HOT, build_label_embeddings

data = generate_synthetic(SyntheticConfig(num_labels=10, feature_dim=64, num_samples=1000, seed=1))
train_set, test_set = train_test_split(data.dataset, 800)
embeddings = {
    ONE_HOT: build_label_embeddings(data.dataset.vocabulary, ONE_HOT),
    "word-vectors": build_label_embeddings(data.dataset.vocabulary, data.word_vectors),
}
quick = TrainConfig(epochs=5, decay_every=2)

print("tau sweep (p = 0.2)")
results = sweep(train_set, test_set, embeddings, taus=TAU_GRID, ps=(0.2,), depths=((128, 64),),
                model_config=ModelConfig(), train_config=quick, workers=4)
print(results_table(results))

# At p = 1 every label discards its own features; the table marks that row
# in the degenerate_diagonal column.
#
# The planted graph is a set of mutual pairs, so A'(1 - p) is A'(p) with the
# partners swapped.  The swap commutes with A' and with the activation, and
# with two layers it cancels out: rows p and 1 - p come out identical.
print("p sweep (tau = 0.4)")
results = sweep(train_set, test_set, {ONE_HOT: embeddings[ONE_HOT]}, taus=(0.4,), ps=P_GRID,
                depths=((128, 64),), train_config=quick, workers=4)
print(results_table(results))
