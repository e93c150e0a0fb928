"""
Building a label correlation graph
==================================

Walk a tiny annotation corpus through every stage of the graph pipeline:
co-occurrence counts, conditional probabilities, the thresholded graph,
the re-weighted graph and its degree-normalized form.
"""

import numpy as np

from mlgcn import build_label_graph

np.set_printoptions(precision=3, suppress=True)

# Three labels, five images.  "person" shows up almost everywhere, "bicycle"
# only ever appears next to a person, "dog" is mostly on its own.
names = ["person", "bicycle", "dog"]
samples = [{0, 1}, {0, 1}, {0}, {0, 2}, {2}]

graph = build_label_graph(samples, len(names), tau=0.4, p=0.2)

print("occurrences N:", graph.stats.N)
print("pair counts M:")
print(graph.stats.M)

# Row i holds P(label j | label i).  The matrix is not symmetric: every
# bicycle comes with a person, but only half of the people ride one.
print("conditional P:")
print(graph.conditional.values)

# Edges below tau disappear.  "dog -> person" survives at 0.5 while
# "person -> dog" (0.25) does not.
print("binary A (tau=0.4):")
print(graph.binary.values)

# Each label keeps 1 - p of its weight and spreads p over its neighbours.
print("re-weighted A' (p=0.2):")
print(graph.reweighted.values)
print("row sums:", graph.reweighted.values.sum(axis=1))

print("normalized adjacency:")
print(graph.normalized.values)

# p = 0 switches propagation off: A' becomes the identity.
print("A' at p=0:")
print(build_label_graph(samples, len(names), tau=0.4, p=0.0).reweighted.values)
