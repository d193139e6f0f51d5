"""
GRU and self-attention encoders
===============================

Both encoders map a batch of item ids to one hidden state per position and
score items against the shared embedding table.
"""
import numpy as np

from reppad.models import ModelConfig, SeqRecModel, stack_batch, train_step
from reppad.numerics import AdamState
from reppad.padding import PaddingPolicy, pad_training_sequence

V, N = 40, 12
seqs = [[3, 7, 1, 9, 4], [12, 5, 6], [8, 8, 2, 30, 31, 17]]
policy = PaddingPolicy(mode="reppad_plus", m_rule="max", max_len=N)
batch = stack_batch([pad_training_sequence(s, policy, np.random.default_rng(i)) for i, s in enumerate(seqs)])
print(batch["input_ids"])

for backbone in ("gru", "self_attention"):
    m = SeqRecModel(ModelConfig(backbone=backbone, embed_dim=16, hidden_dim=16, max_len=N), V, seed=0)
    state = AdamState(lr=0.01)
    losses = [train_step(m, batch, state, np.random.default_rng(step)) for step in range(100)]
    print(backbone, m.num_parameters(), "params", f"loss {losses[0]:.3f} -> {losses[-1]:.3f}")

# the leakage mask stops later copies from attending to earlier ones
m = SeqRecModel(ModelConfig(backbone="self_attention", embed_dim=16, max_len=N, leakage_mask=True), V)
h = m.encode(batch["input_ids"], segments=batch["segments"])
print(batch["segments"][0], h.shape)
