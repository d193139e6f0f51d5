from .adam import AdamState, NonFiniteGradientError, adam_step
from .autodiff import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    dropout,
    embedding_lookup,
    get_default_dtype,
    getitem,
    layer_norm,
    masked_cross_entropy,
    matmul,
    mean,
    mul,
    no_tape,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    tied_softmax_cross_entropy,
    transpose,
    tsum,
)
from .grad_stats import DEFAULT_EDGES, GradientTracker, grad_histogram

__all__ = [
    "AdamState", "NonFiniteGradientError", "adam_step", "Tape", "Tensor", "add", "backward",
    "concat", "dropout", "embedding_lookup", "get_default_dtype", "getitem", "layer_norm",
    "masked_cross_entropy", "matmul", "mean", "mul", "no_tape", "relu", "reshape",
    "set_default_dtype", "sigmoid", "softmax", "stack", "sub", "tanh", "tied_softmax_cross_entropy", "transpose", "tsum",
    "DEFAULT_EDGES", "GradientTracker", "grad_histogram",
]
