"""Zero padding, repeated padding (RepPad) and RepPad+ for fixed-length training samples.

All functions are pure. Randomness comes from an explicit
``numpy.random.Generator``; see :func:`sample_rng` for the per-(epoch, user)
stream derivation.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class PadMode(str, Enum):
    ZERO = "zero"
    REPPAD = "reppad"
    REPPAD_PLUS = "reppad_plus"


class MRule(str, Enum):
    FIX = "fix"
    MAX = "max"
    RAND_INCL_ZERO = "rand_incl_zero"  # random(0, max)
    RAND_FROM_ONE = "rand_from_one"  # random(1, max)


@dataclass(frozen=True)
class PaddingPolicy:
    mode: PadMode = PadMode.REPPAD_PLUS
    m_rule: MRule = MRule.RAND_FROM_ONE
    fix_k: int = 1
    delimiter: bool = True
    max_len: int = 50

    def __post_init__(self):
        object.__setattr__(self, "mode", PadMode(self.mode))
        object.__setattr__(self, "m_rule", MRule(self.m_rule))
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        if self.m_rule is MRule.FIX and self.fix_k < 1:
            raise ValueError("fix(k) needs k >= 1")

    @property
    def label(self) -> str:
        if self.mode is PadMode.ZERO:
            return "zero"
        rule = f"fix{self.fix_k}" if self.m_rule is MRule.FIX else self.m_rule.value
        return f"{self.mode.value}/{rule}/{'delim' if self.delimiter else 'nodelim'}"


@dataclass
class PaddedSample:
    """Fixed-length training triple; ``segments`` tags each position with its copy.

    Segment -1 marks the zero-pad prefix; copies are numbered 0, 1, ... from
    the left and a delimiter slot belongs to the copy it follows.
    """

    input_ids: np.ndarray
    target_ids: np.ndarray
    loss_mask: np.ndarray
    segments: np.ndarray
    pad_count: int = 0

    def __len__(self) -> int:
        return len(self.input_ids)


def sample_rng(master_seed: int, epoch: int, user: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (epoch, user) pair; order-independent."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stream, epoch, user)))


def seq_prepare(seq, n: int) -> list[int]:
    """Left zero-pad to ``n`` or keep the most recent ``n`` entries."""
    if n < 1:
        raise ValueError("N must be positive")
    seq = list(seq)
    if len(seq) < n:
        return [0] * (n - len(seq)) + seq
    return seq[len(seq) - n:]


def max_pad_count(train_len: int, n: int) -> int:
    if train_len < 1:
        raise ValueError("train_len must be positive")
    return n // train_len


def resolve_m(policy: PaddingPolicy, max_count: int, rng: np.random.Generator) -> int:
    rule = policy.m_rule
    if rule is MRule.FIX:
        return min(policy.fix_k, max_count)
    if rule is MRule.MAX:
        return max_count
    if rule is MRule.RAND_INCL_ZERO:
        return int(rng.integers(0, max_count + 1))
    return int(rng.integers(1, max_count + 1))


def random_subseq(seq, length: int, rng: np.random.Generator) -> tuple[list[int], int]:
    """Contiguous window of ``length`` at a uniform start; returns (window, start)."""
    seq = list(seq)
    if not 1 <= length <= len(seq):
        raise ValueError(f"window length {length} outside [1, {len(seq)}]")
    start = int(rng.integers(0, len(seq) - length + 1))
    return seq[start:start + length], start


# Each builder returns (input, target, segments, pad_count) before seq_prepare.

def _repeat(inp, tgt, pad_num: int, delimiter: bool):
    L = len(inp)
    out_i: list[int] = []
    out_t: list[int] = []
    segs: list[int] = []
    for c in range(pad_num):
        out_i += inp
        out_t += tgt
        segs += [c] * L
        if delimiter:
            out_i.append(0)
            out_t.append(0)
            segs.append(c)
    out_i += inp
    out_t += tgt
    segs += [pad_num] * L
    return out_i, out_t, segs, pad_num


def _rep_pad(inp, tgt, policy: PaddingPolicy, rng):
    inp, tgt = list(inp), list(tgt)
    if len(inp) != len(tgt):
        raise ValueError("input and target lengths differ")
    max_count = max_pad_count(len(inp), policy.max_len)
    if max_count <= 1:
        return inp, tgt, [0] * len(inp), 0
    pad_num = resolve_m(policy, max_count, rng)
    return _repeat(inp, tgt, pad_num, policy.delimiter)


def _rep_pad_plus(inp, tgt, policy: PaddingPolicy, rng):
    inp, tgt = list(inp), list(tgt)
    if len(inp) != len(tgt):
        raise ValueError("input and target lengths differ")
    L, N = len(inp), policy.max_len
    if L > N - 2:
        return inp, tgt, [0] * L, 0
    if N // L <= 1:
        sub_len = N - 1 - L if policy.delimiter else N - L
        window, start = random_subseq(inp, sub_len, rng)
        sub_t = tgt[start:start + sub_len]
        if policy.delimiter:
            return (window + [0] + inp, sub_t + [0] + tgt,
                    [0] * (sub_len + 1) + [1] * L, 1)
        return window + inp, sub_t + tgt, [0] * sub_len + [1] * L, 1
    return _rep_pad(inp, tgt, policy, rng)


def rep_pad(inp, tgt, policy: PaddingPolicy, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Repeat the (input, target) pair; apply :func:`seq_prepare` afterwards."""
    i, t, _, _ = _rep_pad(inp, tgt, policy, rng)
    return i, t


def rep_pad_plus(inp, tgt, policy: PaddingPolicy, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """RepPad extended with a random sub-sequence for medium-length inputs."""
    i, t, _, _ = _rep_pad_plus(inp, tgt, policy, rng)
    return i, t


def finalize(inp, tgt, segs, n: int, pad_count: int = 0) -> PaddedSample:
    """Apply seq_prepare to all three streams and derive the loss mask."""
    fill = n - len(inp)
    if fill > 0:
        segs = [-1] * fill + list(segs)
    else:
        segs = list(segs)[len(segs) - n:]
    input_ids = np.asarray(seq_prepare(inp, n), dtype=np.int64)
    target_ids = np.asarray(seq_prepare(tgt, n), dtype=np.int64)
    return PaddedSample(input_ids, target_ids, target_ids != 0, np.asarray(segs, dtype=np.int64), pad_count)


def training_pair(train_items) -> tuple[list[int], list[int]]:
    """One-step-shifted (input, target) from a user's training items."""
    train_items = list(train_items)
    return train_items[:-1], train_items[1:]


def pad_sample(inp, tgt, policy: PaddingPolicy, rng: np.random.Generator | None = None) -> PaddedSample:
    if policy.mode is PadMode.ZERO:
        raw = (list(inp), list(tgt), [0] * len(inp), 0)
    elif policy.mode is PadMode.REPPAD:
        raw = _rep_pad(inp, tgt, policy, rng)
    else:
        raw = _rep_pad_plus(inp, tgt, policy, rng)
    return finalize(*raw[:3], policy.max_len, raw[3])


def pad_training_sequence(train_items, policy: PaddingPolicy,
                          rng: np.random.Generator | None = None) -> PaddedSample:
    """Full pipeline for one user: shift, pad per ``policy``, seq_prepare."""
    inp, tgt = training_pair(train_items)
    return pad_sample(inp, tgt, policy, rng)


def pad_history(history, policy: PaddingPolicy, rng: np.random.Generator | None = None) -> np.ndarray:
    """Inference input: the history itself padded per ``policy`` (no targets)."""
    history = list(history)
    return pad_sample(history, history, policy, rng).input_ids


def format_sample(sample: PaddedSample) -> str:
    """Text fixture used by ``pad-debug`` and the tests."""
    return "\n".join([
        "input  " + " ".join(map(str, sample.input_ids.tolist())),
        "target " + " ".join(map(str, sample.target_ids.tolist())),
        "mask   " + " ".join("1" if m else "0" for m in sample.loss_mask.tolist()),
    ])
