"""
A small reverse-mode autodiff engine
====================================

Operations on Tensors are recorded on a Tape while it is active; backward
walks the tape in reverse. We check one gradient against finite differences
and take a few Adam steps.
"""
import numpy as np

import reppad.numerics as nx
from reppad.numerics import AdamState, Tape, Tensor, adam_step, backward

nx.set_default_dtype(np.float64)
rng = np.random.default_rng(0)

x = Tensor(rng.normal(size=(4, 3)))
w = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
targets = np.array([1, 2, 4, 3])


def loss_fn():
    return nx.masked_cross_entropy(nx.tanh(nx.matmul(x, w)), targets, targets != 0)


with Tape() as tape:
    loss = loss_fn()
backward(tape, loss)

# central difference on one coordinate
eps = 1e-5
w.values[1, 2] += eps
up = loss_fn().item()
w.values[1, 2] -= 2 * eps
down = loss_fn().item()
w.values[1, 2] += eps
print("analytic", w.grad[1, 2], "numeric", (up - down) / (2 * eps))

# the tied loss scores hidden states against an embedding table chunk by chunk
table = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
fused = nx.tied_softmax_cross_entropy(x, table, targets, targets != 0, chunk=2)
plain = nx.masked_cross_entropy(Tensor(x.values @ table.values.T), targets, targets != 0)
print(fused.item(), plain.item())

state = AdamState(lr=0.1)
for step in range(50):
    w.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    adam_step(state, {"w": w})
print("loss after 50 steps:", loss.item())
