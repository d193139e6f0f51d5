"""Define-by-run reverse-mode autodiff over numpy arrays.

Operations executed while a :class:`Tape` is active are recorded in order;
:func:`backward` walks the record in reverse and accumulates gradients.
Outside a tape, operations only compute values (inference mode).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32
_TAPES: list["Tape"] = []


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported precision {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Dense array plus an optional gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(values, Tensor):
            values = values.values
        arr = np.asarray(values)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.values = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of the primitive operations of one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self.nodes.append(_Node(out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def no_tape():
    """Context that suspends recording (e.g. for evaluation inside a training loop)."""

    class _Suspend:
        def __enter__(self):
            self.saved = list(_TAPES)
            _TAPES.clear()

        def __exit__(self, *exc):
            _TAPES.extend(self.saved)

    return _Suspend()


def _wrap(x, like: np.ndarray | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _emit(values: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs)
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, tuple(inputs), backward)
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # stored arrays are never mutated afterwards, so the first one need not be copied
    if g.shape != t.shape:
        g = np.broadcast_to(g, t.shape)
    if g.dtype != t.values.dtype:
        g = g.astype(t.values.dtype)
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` of every requires-grad tensor reachable from ``loss``."""
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.values)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is not None and inp.requires_grad:
                _accumulate(inp, gi)


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "values", None))
    b = _wrap(b, a.values)
    _check_broadcast(a, b, "add")

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _emit(a.values + b.values, (a, b), bw)


def sub(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "values", None))
    b = _wrap(b, a.values)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _emit(a.values - b.values, (a, b), bw)


def mul(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "values", None))
    b = _wrap(b, a.values)
    _check_broadcast(a, b, "mul")

    def bw(g):
        ga = unbroadcast(g * b.values, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit(a.values * b.values, (a, b), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.values)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _emit(y, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    # numerically stable in both tails
    e = np.exp(-np.abs(v))
    y = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(v.dtype, copy=False)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _emit(y, (x,), bw)


def relu(x: Tensor) -> Tensor:
    pos = x.values > 0
    y = np.where(pos, x.values, 0).astype(x.dtype, copy=False)

    def bw(g):
        return (g * pos,)

    return _emit(y, (x,), bw)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.values, -1, -2)), a.shape)
        if b.requires_grad:
            if a.ndim > 2 and b.ndim == 2:
                # fold batch dims into one matmul instead of summing a 3-D product
                ga2 = a.values.reshape(-1, a.shape[-1])
                gb = ga2.T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.matmul(np.swapaxes(a.values, -1, -2), g), b.shape)
        return ga, gb

    return _emit(np.matmul(a.values, b.values), (a, b), bw)


# ---------------------------------------------------------------- shape ops


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape

    def bw(g):
        return (g.reshape(src),)

    return _emit(x.values.reshape(shape), (x,), bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.transpose(g, inv),)

    return _emit(np.transpose(x.values, axes), (x,), bw)


def getitem(x: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.values)
        if _is_advanced(index):
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _emit(x.values[index], (x,), bw)


def _is_advanced(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _emit(np.stack([t.values for t in tensors], axis=axis), tensors, bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _emit(np.concatenate([t.values for t in tensors], axis=axis), tensors, bw)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _emit(np.asarray(x.values.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.values.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


# ---------------------------------------------------------------- nn primitives


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (broadcastable boolean, True = allowed) removes entries from the
    normalisation. Rows with no allowed entry yield all zeros.
    """
    v = x.values
    if mask is None:
        z = v - v.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
    else:
        mask = np.broadcast_to(mask, v.shape)
        z = np.where(mask, v, -np.inf)
        m = z.max(axis=-1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.where(mask, np.exp(z - m), 0.0)
        s = e.sum(axis=-1, keepdims=True)
        y = (e / np.where(s > 0, s, 1.0)).astype(v.dtype, copy=False)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y.astype(v.dtype, copy=False), (x,), bw)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table of {table.shape[0]} rows")

    def bw(g):
        full = np.zeros_like(table.values)
        np.add.at(full, idx.ravel(), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _emit(table.values[idx], (table,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    v = x.values
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    d = v.shape[-1]

    def bw(g):
        gg = gb = gx = None
        if gain.requires_grad:
            gg = unbroadcast(g * xhat, gain.shape)
        if bias.requires_grad:
            gb = unbroadcast(g, bias.shape)
        if x.requires_grad:
            gh = g * gain.values
            gx = inv / d * (d * gh - gh.sum(axis=-1, keepdims=True)
                            - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        return gx, gg, gb

    return _emit(xhat * gain.values + bias.values, (x, gain, bias), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


def masked_cross_entropy(logits: Tensor, targets, mask, skip_column_zero: bool = True) -> Tensor:
    """Mean negative log-likelihood over rows where ``mask`` is true.

    ``logits`` is (rows, classes); ``targets``/``mask`` are (rows,). Column 0
    is the padding token and, by default, is excluded from the normalisation.
    No true rows gives a loss of 0 with zero gradient.
    """
    targets = np.asarray(targets, dtype=np.int64).ravel()
    mask = np.asarray(mask, dtype=bool).ravel()
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0] or mask.shape != targets.shape:
        raise ValueError(
            f"masked_cross_entropy: logits {logits.shape} vs targets {targets.shape} / mask {mask.shape}")
    rows = np.flatnonzero(mask)
    n = rows.size
    dtype = logits.dtype
    if n == 0:
        return _emit(np.zeros((), dtype=dtype), (logits,), lambda g: (np.zeros_like(logits.values),))
    tgt = targets[rows]
    if skip_column_zero and np.any(tgt == 0):
        raise ValueError("masked_cross_entropy: a true mask position has target 0")
    full_rows = n == mask.size
    z = logits.values.copy() if full_rows else logits.values[rows]
    if skip_column_zero:
        z[:, 0] = -np.inf
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)  # z now holds probabilities
    ar = np.arange(n)
    picked = z[ar, tgt]
    loss = -np.log(np.maximum(picked, np.finfo(dtype).tiny)).mean()

    def bw(g):
        z[ar, tgt] -= 1.0
        np.multiply(z, g / n, out=z)
        if full_rows:
            return (z,)
        full = np.zeros_like(logits.values)
        full[rows] = z
        return (full,)

    return _emit(np.asarray(loss, dtype=dtype), (logits,), bw)


def tied_softmax_cross_entropy(hidden: Tensor, table: Tensor, targets, mask,
                               chunk: int = 1024, skip_column_zero: bool = True) -> Tensor:
    """Fused ``masked_cross_entropy(hidden @ table.T, targets, mask)``.

    Works through row blocks so the (rows, classes) score matrix never exists
    in full. Every row is scored, masked or not; the mask only selects which
    rows enter the loss. Gradients are formed during the forward pass.
    """
    targets = np.asarray(targets, dtype=np.int64).ravel()
    mask = np.asarray(mask, dtype=bool).ravel()
    H, E = hidden.values, table.values
    if H.ndim != 2 or E.ndim != 2 or H.shape[1] != E.shape[1]:
        raise ValueError(f"tied_softmax_cross_entropy: hidden {hidden.shape} vs table {table.shape}")
    if targets.shape != (H.shape[0],) or mask.shape != targets.shape:
        raise ValueError(
            f"tied_softmax_cross_entropy: hidden {hidden.shape} vs targets {targets.shape} / mask {mask.shape}")
    n = int(mask.sum())
    dtype = H.dtype
    if n == 0:
        return _emit(np.zeros((), dtype=dtype), (hidden, table),
                     lambda g: (np.zeros_like(H), np.zeros_like(E)))
    if skip_column_zero and np.any(targets[mask] == 0):
        raise ValueError("tied_softmax_cross_entropy: a true mask position has target 0")
    dH = np.empty_like(H)
    dE = np.zeros_like(E)
    total = 0.0
    tiny = np.finfo(dtype).tiny
    for lo in range(0, H.shape[0], chunk):
        hi = min(lo + chunk, H.shape[0])
        Hc = H[lo:hi]
        Z = Hc @ E.T
        if skip_column_zero:
            Z[:, 0] = -np.inf
        Z -= Z.max(axis=1, keepdims=True)
        np.exp(Z, out=Z)
        Z /= Z.sum(axis=1, keepdims=True)
        mc = mask[lo:hi]
        rows = np.flatnonzero(mc)
        tc = targets[lo:hi][rows]
        total -= float(np.log(np.maximum(Z[rows, tc], tiny)).astype(np.float64).sum())
        Z[rows, tc] -= 1.0
        Z[~mc] = 0.0
        dH[lo:hi] = Z @ E
        dE += Z.T @ Hc
    scale = 1.0 / n
    dH *= scale
    dE *= scale

    def bw(g):
        return (dH * g if hidden.requires_grad else None), (dE * g if table.requires_grad else None)

    return _emit(np.asarray(total / n, dtype=dtype), (hidden, table), bw)
