"""
Baseline augmentation operators
===============================

These operators rewrite a training sequence before it is padded with zeros.
They serve as comparison points for repeat padding.
"""
import numpy as np

from reppad.augment import AugmentSpec, apply_augment, build_similarity, enumerate_windows

rng = np.random.default_rng(0)
train = {0: [1, 2, 3, 4, 5, 6], 1: [2, 3, 7, 8], 2: [1, 3, 4, 9, 10]}
sim = build_similarity(train.values(), top_s=3)
print("most similar to 3:", sim.most_similar(3))

seq = train[0]
for op in ("crop", "mask", "reorder", "substitute", "insert", "cmr"):
    print(f"{op:11s}", apply_augment(AugmentSpec(op, ratio=0.5), seq, 10, sim, rng))

print("random_items", apply_augment(AugmentSpec("random_items", count=3), seq, 10, sim, rng))

# slide_window expands one user into several samples instead of rewriting
print(enumerate_windows(seq, 4))
