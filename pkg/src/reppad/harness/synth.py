"""Synthetic interaction logs driven by a topic-structured first-order Markov chain.

Items are split into topics. Each item has a short list of likely successors,
mostly inside its own topic. A user belongs to one topic; at every step the
next item is drawn from the current item's successors with probability
``follow_prob`` and otherwise from the user's topic (Zipf-weighted). The
ground truth (successor lists, topic assignments) is persisted next to the log.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..corpus import InteractionRecord


@dataclass(frozen=True)
class SynthConfig:
    num_users: int = 5000
    num_items: int = 2000
    mean_len: float = 9.0
    min_len: int = 5
    max_seq_len: int = 200
    num_topics: int = 20
    successors: int = 8
    cross_topic: int = 1
    follow_prob: float = 0.3
    zipf: float = 0.8
    seed: int = 0


@dataclass
class MarkovGroundTruth:
    successor_ids: np.ndarray  # (items, successors), 1-based item numbers
    successor_probs: np.ndarray
    item_topic: np.ndarray  # index 0 unused
    user_topic: np.ndarray
    follow_prob: float

    def transition_matrix(self, user_topic: int | None = None) -> np.ndarray:
        """Dense (items+1, items+1) next-item distribution, optionally per user topic."""
        n = len(self.item_topic)
        T = np.zeros((n, n))
        rows = np.repeat(np.arange(1, n), self.successor_ids.shape[1])
        np.add.at(T, (rows, self.successor_ids[1:].ravel()), self.successor_probs[1:].ravel())
        if user_topic is None:
            return T
        T *= self.follow_prob
        members = np.flatnonzero(self.item_topic == user_topic)
        members = members[members > 0]
        T[1:, members] += (1.0 - self.follow_prob) / len(members)
        return T

    def save(self, path: str | Path) -> None:
        np.savez(path, successor_ids=self.successor_ids, successor_probs=self.successor_probs,
                 item_topic=self.item_topic, user_topic=self.user_topic,
                 follow_prob=np.array(self.follow_prob))

    @classmethod
    def load(cls, path: str | Path) -> "MarkovGroundTruth":
        with np.load(path) as z:
            return cls(z["successor_ids"], z["successor_probs"], z["item_topic"], z["user_topic"],
                       float(z["follow_prob"]))


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[list[InteractionRecord], MarkovGroundTruth]:
    I, C = cfg.num_items, cfg.num_topics
    if I // C <= cfg.successors - cfg.cross_topic:
        raise ValueError(f"{I} items over {C} topics leave too few in-topic successors for "
                         f"successors={cfg.successors}; lower num_topics or successors")
    if C < 2 and cfg.cross_topic:
        raise ValueError("cross_topic successors need at least two topics")
    rng = np.random.default_rng(cfg.seed)
    item_topic = np.zeros(I + 1, dtype=np.int64)
    item_topic[1:] = rng.permutation(np.arange(I) % C)
    members = [np.flatnonzero(item_topic == c) for c in range(C)]
    members = [m[m > 0] for m in members]
    # Zipf weights inside each topic, in a random order
    weights = []
    for m in members:
        w = 1.0 / np.arange(1, len(m) + 1) ** cfg.zipf
        weights.append(rng.permutation(w / w.sum()))

    S = cfg.successors
    succ = np.zeros((I + 1, S), dtype=np.int64)
    probs = np.zeros((I + 1, S))
    for i in range(1, I + 1):
        own = members[item_topic[i]]
        inside = rng.choice(own[own != i], size=S - cfg.cross_topic, replace=False)
        outside = rng.choice(np.flatnonzero((item_topic != item_topic[i]) & (np.arange(I + 1) > 0)),
                             size=cfg.cross_topic, replace=False)
        succ[i] = np.concatenate([inside, outside])
        probs[i] = rng.dirichlet(np.full(S, 0.5))

    user_topic = rng.integers(0, C, size=cfg.num_users)
    p_extra = 1.0 / (1.0 + max(cfg.mean_len - cfg.min_len, 0.0))
    records: list[InteractionRecord] = []
    for u in range(cfg.num_users):
        c = user_topic[u]
        length = min(cfg.min_len + rng.geometric(p_extra) - 1, cfg.max_seq_len)
        item = int(rng.choice(members[c], p=weights[c]))
        t = int(rng.integers(1_000_000, 2_000_000))
        for _ in range(length):
            records.append(InteractionRecord(f"u{u}", f"i{item}", t))
            t += int(rng.integers(1, 3600))
            if rng.random() < cfg.follow_prob:
                item = int(rng.choice(succ[item], p=probs[item]))
            else:
                item = int(rng.choice(members[c], p=weights[c]))
    return records, MarkovGroundTruth(succ, probs, item_topic, user_topic, cfg.follow_prob)


def write_tsv(records: list[InteractionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user\titem\ttimestamp\n")
        for r in records:
            fh.write(f"{r.user_id}\t{r.item_id}\t{r.timestamp}\n")


def synthesize(out_dir: str | Path, cfg: SynthConfig = SynthConfig()) -> Path:
    """Write ``interactions.tsv``, ``ground_truth.npz`` and ``synth.json``; returns the log path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, truth = generate(cfg)
    path = out / "interactions.tsv"
    write_tsv(records, path)
    truth.save(out / "ground_truth.npz")
    (out / "synth.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    return path
