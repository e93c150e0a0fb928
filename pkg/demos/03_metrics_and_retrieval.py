"""
Evaluation metrics and nearest-neighbour retrieval
==================================================

Small hand-sized inputs for the decision rules, precision/recall/F1,
average precision and k-NN retrieval.
"""

import numpy as np

from mlgcn import average_precision, decide_labels, knn_retrieve, prf1
from mlgcn.metrics import Threshold, TopK, evaluate_scores

scores = np.array([[2.0, -1.0, 0.3, -0.2],
                   [0.1, 1.5, -3.0, 0.0]])
truth = np.array([[1, 0, 0, 1],
                  [0, 1, 0, 0]])

# Threshold rule: sigmoid(score) > 0.5, so a score of exactly 0 is negative.
print(decide_labels(scores, Threshold(0.5)).decided)
# Top-k keeps the k largest scores of every row.
print(decide_labels(scores, TopK(2)).decided)

pred = decide_labels(scores)
print("per-class P/R/F1:", prf1(pred, truth, "per-class"))
print("overall  P/R/F1:", prf1(pred, truth, "overall"))

# Average precision of a ranking whose relevance reads [1, 0, 1].
print("AP:", average_precision([0.9, 0.8, 0.7], [1, 0, 1]))

print(evaluate_scores(scores, truth).to_text())

# Retrieval ranks gallery vectors by Euclidean distance, nearest first.
gallery = np.array([[0.0], [3.0], [1.0]])
print("neighbours of 0.9:", knn_retrieve([0.9], gallery, k=2))

rng = np.random.default_rng(0)
feats = rng.standard_normal((50, 8))
print("top-5 for sample 7:", knn_retrieve(feats[7], feats, k=5))
