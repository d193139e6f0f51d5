"""Heuristic sequence augmentation operators used as comparison baselines."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import numpy as np


class AugmentOp(str, Enum):
    RANDOM_ITEMS = "random_items"
    SLIDE_WINDOW = "slide_window"
    RANDOM_SEQ_ITEMS = "random_seq_items"
    CROP = "crop"
    MASK = "mask"
    REORDER = "reorder"
    SUBSTITUTE = "substitute"
    INSERT = "insert"
    # composites: one operator drawn per sequence per epoch
    CMR = "cmr"
    CMRSI = "cmrsi"


RATIO_OPS = {AugmentOp.CROP, AugmentOp.MASK, AugmentOp.REORDER, AugmentOp.SUBSTITUTE, AugmentOp.INSERT}
COUNT_OPS = {AugmentOp.RANDOM_ITEMS, AugmentOp.RANDOM_SEQ_ITEMS}
COMPOSITES = {
    AugmentOp.CMR: (AugmentOp.CROP, AugmentOp.MASK, AugmentOp.REORDER),
    AugmentOp.CMRSI: (AugmentOp.CROP, AugmentOp.MASK, AugmentOp.REORDER, AugmentOp.SUBSTITUTE, AugmentOp.INSERT),
}


@dataclass(frozen=True)
class AugmentSpec:
    op: AugmentOp
    ratio: float | None = None
    window: int | None = None
    count: int | None = None

    def __post_init__(self):
        op = AugmentOp(self.op)
        object.__setattr__(self, "op", op)
        uses_ratio = op in RATIO_OPS or op in COMPOSITES
        if uses_ratio:
            if self.ratio is None:
                object.__setattr__(self, "ratio", 0.2)
            if not 0.0 < self.ratio <= 1.0:
                raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if op is AugmentOp.SLIDE_WINDOW and (self.window is None or self.window < 1):
            raise ValueError("slide_window needs a positive window")
        if op in COUNT_OPS and (self.count is None or self.count < 1):
            raise ValueError(f"{op.value} needs a positive count")
        extra = {
            "ratio": self.ratio is not None and not uses_ratio,
            "window": self.window is not None and op is not AugmentOp.SLIDE_WINDOW,
            "count": self.count is not None and op not in COUNT_OPS,
        }
        bad = [k for k, v in extra.items() if v]
        if bad:
            raise ValueError(f"parameters {bad} do not apply to {op.value}")


@dataclass
class ItemSimilarity:
    top: dict[int, list[int]]

    def most_similar(self, item: int) -> int | None:
        ranked = self.top.get(item)
        return ranked[0] if ranked else None


def build_similarity(train_sequences, top_s: int = 10, window: int = 2) -> ItemSimilarity:
    """Co-occurrence within ``window`` positions; ties broken by ascending item index."""
    counts: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    seqs = list(train_sequences.values()) if isinstance(train_sequences, dict) else list(train_sequences)
    if not seqs:
        raise ValueError("empty training split")
    for seq in seqs:
        for i, a in enumerate(seq):
            for j in range(max(0, i - window), min(len(seq), i + window + 1)):
                b = seq[j]
                if j != i and b != a:
                    counts[a][b] += 1
    top = {a: [b for b, _ in sorted(nb.items(), key=lambda kv: (-kv[1], kv[0]))[:top_s]]
           for a, nb in counts.items()}
    return ItemSimilarity(top)


def enumerate_windows(seq, window: int) -> list[list[int]]:
    seq = list(seq)
    if window < 1:
        raise ValueError("window must be positive")
    if window >= len(seq):
        return [seq]
    return [seq[s:s + window] for s in range(len(seq) - window + 1)]


def apply_augment(spec: AugmentSpec, seq, vocab_size: int, sim: ItemSimilarity | None,
                  rng: np.random.Generator) -> list[int]:
    seq = list(seq)
    n = len(seq)
    if n < 2:
        raise ValueError("augmentation needs a sequence of length >= 2")
    op = spec.op
    if op in COMPOSITES:
        choices = COMPOSITES[op]
        op = choices[int(rng.integers(len(choices)))]
    if op is AugmentOp.CROP:
        width = math.ceil(spec.ratio * n)
        start = int(rng.integers(0, n - width + 1))
        return seq[start:start + width]
    if op is AugmentOp.MASK:
        k = math.floor(spec.ratio * n)
        out = list(seq)
        for p in rng.choice(n, size=k, replace=False):
            out[int(p)] = 0
        return out
    if op is AugmentOp.REORDER:
        width = math.ceil(spec.ratio * n)
        start = int(rng.integers(0, n - width + 1))
        block = seq[start:start + width]
        perm = rng.permutation(width)
        return seq[:start] + [block[int(i)] for i in perm] + seq[start + width:]
    if op is AugmentOp.SUBSTITUTE:
        _need_sim(sim, op)
        k = math.floor(spec.ratio * n)
        out = list(seq)
        for p in rng.choice(n, size=k, replace=False):
            alt = sim.most_similar(out[int(p)])
            if alt is not None:
                out[int(p)] = alt
        return out
    if op is AugmentOp.INSERT:
        _need_sim(sim, op)
        k = math.floor(spec.ratio * n)
        chosen = set(int(p) for p in rng.choice(n, size=k, replace=False))
        out = []
        for p, item in enumerate(seq):
            out.append(item)
            alt = sim.most_similar(item) if p in chosen else None
            if alt is not None:
                out.append(alt)
        return out
    if op is AugmentOp.RANDOM_ITEMS:
        if vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        return seq + [int(x) for x in rng.integers(1, vocab_size + 1, size=spec.count)]
    if op is AugmentOp.RANDOM_SEQ_ITEMS:
        return seq + [seq[int(i)] for i in rng.integers(0, n, size=spec.count)]
    if op is AugmentOp.SLIDE_WINDOW:
        raise ValueError("slide_window produces several samples; use enumerate_windows")
    raise ValueError(f"unknown operator {op}")


def _need_sim(sim, op):
    if sim is None:
        raise ValueError(f"{op.value} requires an ItemSimilarity")
