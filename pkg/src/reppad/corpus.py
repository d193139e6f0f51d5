"""Interaction-log ingestion, k-core filtering, per-user sequences and leave-one-out splits."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)


class MalformedInputError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be non-empty")


@dataclass(frozen=True)
class ColumnFormat:
    user_col: int = 0
    item_col: int = 1
    time_col: int = 2
    delimiter: str | None = "\t"  # None splits on any whitespace


@dataclass
class Corpus:
    sequences: dict[int, list[int]]
    item_vocab: dict[str, int]
    user_vocab: dict[str, int]

    @property
    def num_items(self) -> int:
        return len(self.item_vocab)

    @property
    def num_users(self) -> int:
        return len(self.user_vocab)

    @property
    def num_interactions(self) -> int:
        return sum(len(s) for s in self.sequences.values())

    def summary(self) -> dict:
        n = self.num_interactions
        users, items = self.num_users, self.num_items
        # distinct pairs keep sparsity inside [0, 1] when interactions repeat
        pairs = sum(len(set(s)) for s in self.sequences.values())
        return {
            "num_users": users,
            "num_items": items,
            "num_interactions": n,
            "avg_length": n / users if users else 0.0,
            "sparsity": 1.0 - pairs / (users * items) if users and items else 1.0,
        }

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


@dataclass
class SplitSequences:
    train_items: dict[int, list[int]] = field(default_factory=dict)
    valid_target: dict[int, int] = field(default_factory=dict)
    test_target: dict[int, int] = field(default_factory=dict)

    @property
    def users(self) -> list[int]:
        return sorted(self.train_items)

    def valid_history(self, user: int) -> list[int]:
        return self.train_items[user]

    def test_history(self, user: int) -> list[int]:
        return self.train_items[user] + [self.valid_target[user]]


def load_interactions(path: str | Path, fmt: ColumnFormat = ColumnFormat(),
                      max_malformed_fraction: float = 0.01) -> list[InteractionRecord]:
    """Parse a delimiter-separated log; ``#`` lines and blank lines are skipped.

    Malformed lines are logged and dropped; if their share of data lines
    exceeds ``max_malformed_fraction`` a :class:`MalformedInputError` lists them.
    """
    records: list[InteractionRecord] = []
    bad: list[int] = []
    need = max(fmt.user_col, fmt.item_col, fmt.time_col)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split(fmt.delimiter) if fmt.delimiter else line.split()
            try:
                if len(parts) <= need:
                    raise ValueError
                rec = InteractionRecord(parts[fmt.user_col].strip(), parts[fmt.item_col].strip(),
                                        int(float(parts[fmt.time_col])))
            except ValueError:
                bad.append(lineno)
                continue
            records.append(rec)
    total = len(records) + len(bad)
    if bad:
        logger.warning("%s: %d malformed line(s): %s", path, len(bad), bad[:20])
        if len(bad) / total > max_malformed_fraction:
            raise MalformedInputError(
                f"{path}: {len(bad)} of {total} lines malformed (limit {max_malformed_fraction:.2%}); "
                f"line numbers {bad[:50]}")
    return records


def k_core_filter(records: list[InteractionRecord], k: int) -> list[InteractionRecord]:
    """Drop users/items with fewer than ``k`` records until nothing changes."""
    if k < 1:
        raise ValueError("k must be >= 1")
    current = list(records)
    while True:
        users = Counter(r.user_id for r in current)
        items = Counter(r.item_id for r in current)
        kept = [r for r in current if users[r.user_id] >= k and items[r.item_id] >= k]
        if len(kept) == len(current):
            return kept
        current = kept


def build_corpus(records: list[InteractionRecord]) -> Corpus:
    item_vocab = {iid: i for i, iid in enumerate(sorted({r.item_id for r in records}), start=1)}
    user_vocab = {uid: u for u, uid in enumerate(sorted({r.user_id for r in records}))}
    per_user: dict[int, list[tuple[int, int]]] = {u: [] for u in user_vocab.values()}
    for r in records:
        per_user[user_vocab[r.user_id]].append((r.timestamp, item_vocab[r.item_id]))
    sequences = {}
    for u, events in per_user.items():
        events.sort(key=lambda e: e[0])  # stable: ties keep file order
        sequences[u] = [item for _, item in events]
    return Corpus(sequences=sequences, item_vocab=item_vocab, user_vocab=user_vocab)


def leave_one_out_split(corpus: Corpus) -> SplitSequences:
    split = SplitSequences()
    for u in sorted(corpus.sequences):
        seq = corpus.sequences[u]
        if len(seq) < 3:
            raise ValueError(f"user {u} has {len(seq)} interactions; leave-one-out needs at least 3")
        split.train_items[u] = list(seq[:-2])
        split.valid_target[u] = seq[-2]
        split.test_target[u] = seq[-1]
    return split


def prepare(path: str | Path, fmt: ColumnFormat = ColumnFormat(), k: int = 5,
            max_malformed_fraction: float = 0.01) -> tuple[Corpus, SplitSequences]:
    records = k_core_filter(load_interactions(path, fmt, max_malformed_fraction), k)
    corpus = build_corpus(records)
    return corpus, leave_one_out_split(corpus)
