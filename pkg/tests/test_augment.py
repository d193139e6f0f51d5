import math
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reppad.augment import AugmentOp, AugmentSpec, apply_augment, build_similarity, enumerate_windows


def rng(seed=0):
    return np.random.default_rng(seed)


def brute_similarity(seqs, top_s, window=2):
    counts = defaultdict(Counter)
    for seq in seqs:
        for i in range(len(seq)):
            for j in range(len(seq)):
                if i != j and abs(i - j) <= window and seq[i] != seq[j]:
                    counts[seq[i]][seq[j]] += 1
    return {a: [b for b, _ in sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[:top_s]]
            for a, c in counts.items()}


def test_spec_parameter_rules():
    assert AugmentSpec("crop").ratio == 0.2
    with pytest.raises(ValueError):
        AugmentSpec("crop", ratio=0.0)
    with pytest.raises(ValueError):
        AugmentSpec("crop", count=3)
    with pytest.raises(ValueError):
        AugmentSpec("slide_window")
    with pytest.raises(ValueError):
        AugmentSpec("random_items")
    AugmentSpec("slide_window", window=3)
    AugmentSpec("random_seq_items", count=2)


def test_crop_full_ratio_identity():
    assert apply_augment(AugmentSpec("crop", ratio=1.0), [3, 1, 4, 1, 5], 10, None, rng()) == [3, 1, 4, 1, 5]


def test_mask_zero_positions_identity():
    assert apply_augment(AugmentSpec("mask", ratio=0.2), [3, 1, 4, 1], 10, None, rng()) == [3, 1, 4, 1]


def test_mask_count_and_positions():
    out = apply_augment(AugmentSpec("mask", ratio=0.5), [3, 1, 4, 1, 5, 9], 10, None, rng(4))
    assert out.count(0) == 3
    assert all(o in (0, s) for o, s in zip(out, [3, 1, 4, 1, 5, 9]))


def test_reorder_multiset_all_windows():
    seq = [1, 2, 3, 4, 5]
    starts = Counter()
    for seed in range(300):
        out = apply_augment(AugmentSpec("reorder", ratio=0.6), seq, 10, None, rng(seed))
        assert sorted(out) == seq
        diff = [i for i in range(5) if out[i] != seq[i]]
        if diff:
            assert diff[-1] - diff[0] < 3  # changes confined to one window of length 3
            starts[diff[0]] += 1
    assert set(starts) <= {0, 1, 2, 3}


def test_crop_length_and_contiguity():
    seq = list(range(1, 21))
    for seed in range(50):
        out = apply_augment(AugmentSpec("crop", ratio=0.33), seq, 30, None, rng(seed))
        assert len(out) == math.ceil(0.33 * 20)
        assert out == list(range(out[0], out[0] + len(out)))


def test_similarity_tie_rule():
    sim = build_similarity([[1, 2, 3]])
    assert sim.most_similar(2) == 1


def test_similarity_single_neighbor():
    sim = build_similarity([[7, 9]])
    assert sim.most_similar(7) == 9 and sim.most_similar(9) == 7


def test_similarity_matches_brute_force():
    g = np.random.default_rng(1)
    seqs = [g.integers(1, 30, size=int(g.integers(2, 15))).tolist() for _ in range(100)]
    sim = build_similarity(seqs, top_s=5)
    assert sim.top == brute_similarity(seqs, 5)
    for a, ranked in sim.top.items():
        assert a not in ranked


def test_similarity_rejects_empty():
    with pytest.raises(ValueError):
        build_similarity([])


def test_substitute_and_insert_use_top_item():
    sim = build_similarity([[1, 2], [1, 2], [3, 4]])
    out = apply_augment(AugmentSpec("substitute", ratio=1.0), [1, 3], 5, sim, rng())
    assert out == [2, 4]
    out = apply_augment(AugmentSpec("insert", ratio=1.0), [1, 3], 5, sim, rng())
    assert out == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        apply_augment(AugmentSpec("insert"), [1, 3], 5, None, rng())


def test_random_append_ops():
    out = apply_augment(AugmentSpec("random_items", count=4), [1, 2], 7, None, rng())
    assert out[:2] == [1, 2] and len(out) == 6 and all(1 <= x <= 7 for x in out)
    out = apply_augment(AugmentSpec("random_seq_items", count=3), [5, 6], 7, None, rng())
    assert out[:2] == [5, 6] and set(out[2:]) <= {5, 6}


def test_slide_window_goes_through_enumerate():
    with pytest.raises(ValueError):
        apply_augment(AugmentSpec("slide_window", window=2), [1, 2, 3], 5, None, rng())


def test_enumerate_windows():
    assert enumerate_windows([1, 2, 3, 4], 3) == [[1, 2, 3], [2, 3, 4]]
    assert enumerate_windows([1, 2, 3], 3) == [[1, 2, 3]]
    assert enumerate_windows([1, 2], 5) == [[1, 2]]
    seq = np.random.default_rng(0).integers(1, 100, size=20).tolist()
    wins = enumerate_windows(seq, 5)
    assert len(wins) == 16
    assert all(w == seq[s:s + 5] for s, w in enumerate(wins))
    with pytest.raises(ValueError):
        enumerate_windows(seq, 0)


def test_short_sequence_rejected():
    with pytest.raises(ValueError):
        apply_augment(AugmentSpec("crop"), [1], 5, None, rng())


def test_composite_draws_member_operator():
    sim = build_similarity([[1, 2, 3, 4, 5]])
    seen = set()
    for seed in range(60):
        out = apply_augment(AugmentSpec("cmr", ratio=0.4), [1, 2, 3, 4, 5], 5, sim, rng(seed))
        if len(out) < 5:
            seen.add("crop")
        elif 0 in out:
            seen.add("mask")
        else:
            seen.add("reorder")
    assert seen == {"crop", "mask", "reorder"}


OPS = [AugmentSpec("crop", ratio=0.5), AugmentSpec("mask", ratio=0.5), AugmentSpec("reorder", ratio=0.5),
       AugmentSpec("substitute", ratio=0.5), AugmentSpec("insert", ratio=0.5),
       AugmentSpec("random_items", count=3), AugmentSpec("random_seq_items", count=3),
       AugmentSpec("cmrsi", ratio=0.3)]


@settings(max_examples=200, deadline=None)
@given(seq=st.lists(st.integers(1, 40), min_size=2, max_size=30), k=st.integers(0, len(OPS) - 1),
       seed=st.integers(0, 10**6))
def test_operator_laws(seq, k, seed):
    spec = OPS[k]
    sim = build_similarity([seq, list(range(1, 41))])
    before = list(seq)
    out = apply_augment(spec, seq, 40, sim, rng(seed))
    assert seq == before  # pure
    assert out == apply_augment(spec, seq, 40, sim, rng(seed))  # deterministic
    assert all(0 <= x <= 40 for x in out)
    n = len(seq)
    if spec.op in (AugmentOp.CROP, AugmentOp.REORDER):
        assert len(out) <= n
    if spec.op in (AugmentOp.MASK, AugmentOp.SUBSTITUTE):
        assert len(out) == n
    if spec.op is AugmentOp.INSERT:
        assert len(out) == n + math.floor(0.5 * n)
