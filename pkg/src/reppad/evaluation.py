"""Full-ranking leave-one-out evaluation, early stopping and paired t-tests."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .padding import PaddingPolicy, PadMode, pad_history, sample_rng

KS = (5, 10, 20)
METRICS = tuple(f"HR@{k}" for k in KS) + tuple(f"NDCG@{k}" for k in KS)


# ---------------------------------------------------------------- ranking


def rank_of_target(scores: np.ndarray, target: int, exclude: np.ndarray | None = None) -> int:
    """1 + number of real items (index >= 1) scoring strictly above ``target``."""
    if target < 1:
        raise ValueError("target index 0 is the padding token")
    s = np.asarray(scores)[1:]
    t = s[target - 1]
    better = s > t
    if exclude is not None:
        ex = np.asarray(exclude, dtype=np.int64)
        ex = ex[(ex >= 1) & (ex != target)] - 1
        better[ex] = False
    return 1 + int(better.sum())


def ranks_from_scores(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rank_of_target` over rows of a (users, |V|+1) score matrix."""
    targets = np.asarray(targets, dtype=np.int64)
    if np.any(targets < 1):
        raise ValueError("target index 0 is the padding token")
    s = scores[:, 1:]
    t = scores[np.arange(len(targets)), targets][:, None]
    return 1 + (s > t).sum(axis=1)


def hr_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    r = np.asarray(ranks)
    return float(np.mean(r <= k)) if r.size else 0.0


def ndcg_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    r = np.asarray(ranks, dtype=np.float64)
    if not r.size:
        return 0.0
    gains = np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)
    return float(gains.mean())


def metric_table(ranks) -> dict[str, float]:
    out = {f"HR@{k}": hr_at_k(ranks, k) for k in KS}
    out.update({f"NDCG@{k}": ndcg_at_k(ranks, k) for k in KS})
    return out


def per_user_metric(ranks, metric: str) -> np.ndarray:
    name, k = metric.split("@")
    r = np.asarray(ranks, dtype=np.float64)
    k = int(k)
    if name == "HR":
        return (r <= k).astype(np.float64)
    return np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)


# ---------------------------------------------------------------- reports


@dataclass
class EvalReport:
    metrics: dict[str, dict[str, float]] = field(default_factory=dict)
    ranks: dict[str, list[int]] = field(default_factory=dict)
    users: list[int] = field(default_factory=list)

    def add_split(self, split: str, ranks) -> None:
        ranks = [int(r) for r in ranks]
        self.ranks[split] = ranks
        self.metrics[split] = metric_table(ranks)

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "ranks": self.ranks, "users": self.users}

    def write_json(self, path: str | Path, meta: dict | None = None) -> None:
        doc = dict(meta or {})
        doc.update(self.to_dict())
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(metrics=d["metrics"], ranks=d["ranks"], users=d.get("users", []))

    def csv_rows(self, dataset: str, backbone: str, policy: str, seed: int) -> list[list]:
        return [[dataset, backbone, policy, seed, split, m, repr(v)]
                for split, table in self.metrics.items() for m, v in table.items()]

    def append_csv(self, path: str | Path, dataset: str, backbone: str, policy: str, seed: int) -> None:
        path = Path(path)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["dataset", "backbone", "policy", "seed", "split", "metric", "value"])
            w.writerows(self.csv_rows(dataset, backbone, policy, seed))


def evaluate(model, split, which: str = "valid", users=None, batch_size: int = 512,
             input_policy: PaddingPolicy | None = None, seed: int = 0,
             exclude_history: bool = False) -> np.ndarray:
    """Per-user ranks for ``which`` in {"valid", "test"}.

    Inputs are zero-padded histories unless ``input_policy`` says otherwise
    (RepPad+ at inference for the beta ablation).
    """
    users = split.users if users is None else list(users)
    n = model.config.max_len
    if input_policy is None:
        input_policy = PaddingPolicy(mode=PadMode.ZERO, max_len=n)
    histories, targets = [], []
    for u in users:
        if which == "valid":
            histories.append(split.valid_history(u))
            targets.append(split.valid_target[u])
        elif which == "test":
            histories.append(split.test_history(u))
            targets.append(split.test_target[u])
        else:
            raise ValueError(f"unknown split {which!r}")
    ranks = np.empty(len(users), dtype=np.int64)
    for lo in range(0, len(users), batch_size):
        hi = min(lo + batch_size, len(users))
        rows = []
        for i in range(lo, hi):
            rng = None if input_policy.mode is PadMode.ZERO else sample_rng(seed, 0, users[i], stream=9)
            rows.append(pad_history(histories[i], input_policy, rng))
        scores = model.score_last(np.stack(rows))
        if exclude_history:
            for j, i in enumerate(range(lo, hi)):
                ranks[i] = rank_of_target(scores[j], targets[i], exclude=np.asarray(histories[i]))
        else:
            ranks[lo:hi] = ranks_from_scores(scores, np.asarray(targets[lo:hi]))
    return ranks


# ---------------------------------------------------------------- early stopping


class EarlyStopMonitor:
    """Stops after ``patience`` epochs without strict improvement."""

    def __init__(self, patience: int = 20):
        self.patience = patience
        self.history: list[float] = []
        self.best_epoch = -1
        self.best_value = -math.inf

    def update(self, value: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        self.history.append(value)
        epoch = len(self.history) - 1
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
        return epoch - self.best_epoch >= self.patience

    @property
    def improved_last(self) -> bool:
        return self.best_epoch == len(self.history) - 1


def early_stop_monitor(history, patience: int = 20) -> tuple[bool, int, int]:
    """Replay a metric history; returns (stopped, stop_epoch, best_epoch).

    ``stop_epoch`` is the index of the epoch after which training stops, or
    the last index if the budget ran out.
    """
    mon = EarlyStopMonitor(patience)
    for e, v in enumerate(history):
        if mon.update(v):
            return True, e, mon.best_epoch
    return False, len(history) - 1, mon.best_epoch


# ---------------------------------------------------------------- significance


def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    # modified Lentz continued fraction for the incomplete beta
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b); accurate to ~1e-12 for the moderate a, b used by t tests."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> float:
    """Two-sided paired t-test p-value.

    Zero-variance differences give p = 1 when all are zero and p = 0 otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired arrays differ in shape: {a.shape} vs {b.shape}")
    d = a - b
    n = d.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n))
    return t_two_sided_p(t, n - 1)
