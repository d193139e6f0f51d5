"""
Filling the padding space with repeats
======================================

Short histories leave most of a length-N input empty. Instead of zeros we can
repeat the sequence itself, optionally separated by a 0 delimiter.
"""
import numpy as np

from reppad.padding import PaddingPolicy, format_sample, pad_training_sequence, sample_rng

seq = [5, 8, 2, 9, 4]

for mode in ("zero", "reppad", "reppad_plus"):
    p = PaddingPolicy(mode=mode, m_rule="max", max_len=14)
    print(mode)
    print(format_sample(pad_training_sequence(seq, p, sample_rng(0, 0, 0))))
    print()

# without the delimiter the copies are glued together
p = PaddingPolicy(mode="reppad", m_rule="max", delimiter=False, max_len=14)
print(pad_training_sequence(seq, p).input_ids)

# rand rules draw a fresh repeat count per user and epoch
p = PaddingPolicy(mode="reppad", m_rule="rand_incl_zero", max_len=30)
counts = [pad_training_sequence(seq, p, sample_rng(1, e, 0)).pad_count for e in range(2000)]
print(np.bincount(counts))

# a medium-length sequence gets a random contiguous slice in front
long_seq = list(range(1, 11))
p = PaddingPolicy(mode="reppad_plus", max_len=14)
for epoch in range(3):
    print(pad_training_sequence(long_seq, p, sample_rng(0, epoch, 0)).input_ids)
