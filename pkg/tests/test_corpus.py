import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reppad.corpus import (
    ColumnFormat, InteractionRecord, MalformedInputError, build_corpus, k_core_filter, leave_one_out_split,
    load_interactions, prepare,
)


def R(u, i, t):
    return InteractionRecord(u, i, t)


def brute_k_core(records, k):
    """Reference: remove one offending record at a time until stable."""
    cur = list(records)
    changed = True
    while changed:
        changed = False
        uc = Counter(r.user_id for r in cur)
        ic = Counter(r.item_id for r in cur)
        for idx, r in enumerate(cur):
            if uc[r.user_id] < k or ic[r.item_id] < k:
                del cur[idx]
                changed = True
                break
    return cur


def test_load_three_lines(tmp_path):
    p = tmp_path / "log.tsv"
    p.write_text("u1\ti1\t10\nu1\ti2\t20\nu2\ti1\t5\n")
    assert load_interactions(p) == [R("u1", "i1", 10), R("u1", "i2", 20), R("u2", "i1", 5)]


def test_load_empty_and_comments(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    assert load_interactions(p) == []
    p.write_text("# header\n\nu\ti\t1\n")
    assert load_interactions(p) == [R("u", "i", 1)]


def test_load_malformed_threshold(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("u1\ti1\t10\nu1\ti2\nu2\ti1\t5\n")
    with pytest.raises(MalformedInputError, match=r"\[2\]"):
        load_interactions(p)
    assert len(load_interactions(p, max_malformed_fraction=0.5)) == 2


def test_load_custom_columns(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("10,i1,u1\n20,i2,u1\n")
    fmt = ColumnFormat(user_col=2, item_col=1, time_col=0, delimiter=",")
    assert load_interactions(p, fmt) == [R("u1", "i1", 10), R("u1", "i2", 20)]


def test_load_unreadable(tmp_path):
    with pytest.raises(OSError):
        load_interactions(tmp_path / "missing.tsv")


def test_record_requires_ids():
    with pytest.raises(ValueError):
        InteractionRecord("", "i", 1)


def test_k_core_fixed_point_unchanged():
    recs = [R(f"u{u}", f"i{i}", u * 10 + i) for u in range(5) for i in range(5)]
    assert k_core_filter(recs, 5) == recs


def test_k_core_single_user_below_threshold():
    assert k_core_filter([R("u", f"i{j}", j) for j in range(4)], 5) == []


def test_k_core_chain():
    recs = [R("A", f"i{j}", j) for j in range(1, 6)] + [R("B", "i5", 9)]
    assert k_core_filter(recs, 2) == []
    recs += [R("A", "i1", 20), R("B", "i1", 21)]
    out = k_core_filter(recs, 2)
    assert out == brute_k_core(recs, 2)


def test_k_core_matches_brute_force_on_random_logs():
    rng = random.Random(0)
    for trial in range(200):
        recs = [R(f"u{rng.randrange(8)}", f"i{rng.randrange(8)}", rng.randrange(100)) for _ in range(50)]
        k = rng.randint(1, 5)
        out = k_core_filter(recs, k)
        assert out == brute_k_core(recs, k)
        assert k_core_filter(out, k) == out  # idempotence


def test_k_core_rejects_bad_k():
    with pytest.raises(ValueError):
        k_core_filter([], 0)


def test_build_corpus_orders_by_time():
    c = build_corpus([R("u1", "i2", 20), R("u1", "i1", 10)])
    assert c.sequences[0] == [c.item_vocab["i1"], c.item_vocab["i2"]]


def test_build_corpus_lexicographic_vocab():
    c = build_corpus([R("u", "b", 1), R("u", "a", 2)])
    assert c.item_vocab == {"a": 1, "b": 2}
    assert 0 not in c.item_vocab.values()


def test_build_corpus_stable_ties_and_duplicates():
    c = build_corpus([R("u", "x", 5), R("u", "y", 5), R("u", "x", 5)])
    assert c.sequences[0] == [1, 2, 1]


def test_build_corpus_permutation_invariance():
    rng = random.Random(3)
    recs = [R(f"u{rng.randrange(10)}", f"i{rng.randrange(30)}", t) for t in rng.sample(range(10_000), 100)]
    shuffled = recs[:]
    rng.shuffle(shuffled)
    assert build_corpus(shuffled) == build_corpus(sorted(recs, key=lambda r: r.timestamp))


def test_split_definition():
    c = build_corpus([R("u", f"i{j}", j) for j in range(1, 6)])
    s = leave_one_out_split(c)
    assert s.train_items[0] == [1, 2, 3]
    assert (s.valid_target[0], s.test_target[0]) == (4, 5)
    assert s.test_history(0) == [1, 2, 3, 4]


def test_split_rejects_short_sequences():
    with pytest.raises(ValueError):
        leave_one_out_split(build_corpus([R("u", "a", 1), R("u", "b", 2)]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 9), st.integers(0, 50)), min_size=0, max_size=120))
def test_split_reconstruction_and_record_count(raw):
    recs = [R(f"u{u}", f"i{i}", t) for u, i, t in raw]
    core = k_core_filter(recs, 3)
    c = build_corpus(core)
    assert c.num_interactions == len(core)
    s = leave_one_out_split(c)
    for u, seq in c.sequences.items():
        assert s.train_items[u] + [s.valid_target[u], s.test_target[u]] == seq
        assert len(s.train_items[u]) >= 1


def test_prepare_is_deterministic(tmp_path):
    rng = random.Random(1)
    p = tmp_path / "log.tsv"
    p.write_text("".join(f"u{rng.randrange(20)}\ti{rng.randrange(15)}\t{rng.randrange(999)}\n" for _ in range(600)))
    c1, s1 = prepare(p)
    c2, s2 = prepare(p)
    assert c1 == c2 and s1 == s2
    for u in c1.sequences:
        assert len(c1.sequences[u]) >= 5
    summary = c1.summary()
    assert summary["num_interactions"] == c1.num_interactions
    assert 0 <= summary["sparsity"] <= 1
