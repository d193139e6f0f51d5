"""Adam with bias correction; parameters move only where the gradient is non-zero."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray] | None = None) -> AdamState:
    """Apply one Adam update in place.

    ``grads`` defaults to each parameter's ``.grad``; a missing gradient is
    treated as zero. Moments decay everywhere, but a parameter entry whose
    current gradient is exactly zero is left untouched (lazy update for
    embedding rows that were not looked up).
    """
    if grads is None:
        grads = {name: p.grad for name, p in params.items()}
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        m, v = state.m[name], state.v[name]
        m *= b1
        v *= b2
        if g is None:
            continue
        m += (1.0 - b1) * g
        v += (1.0 - b2) * (g * g)
        update = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.epsilon)
        active = g != 0
        if active.all():
            p.values -= update.astype(p.dtype, copy=False)
        else:
            p.values -= np.where(active, update, 0).astype(p.dtype, copy=False)
    return state
