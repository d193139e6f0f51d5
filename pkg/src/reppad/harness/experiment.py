"""Training loop, early stopping and report emission for one configuration."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import corpus as corpus_mod
from ..augment import AugmentOp, apply_augment, build_similarity, enumerate_windows
from ..evaluation import EarlyStopMonitor, EvalReport, evaluate, metric_table
from ..models import SeqRecModel, stack_batch, train_step
from ..numerics import AdamState, GradientTracker
from ..padding import (PaddedSample, PaddingPolicy, PadMode, _rep_pad_plus, finalize, max_pad_count,
                       pad_sample, random_subseq, resolve_m, sample_rng, training_pair)
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

# rng stream tags for sample_rng
PAD_STREAM, SHUFFLE_STREAM, DROPOUT_STREAM, AUGMENT_STREAM, GAMMA_STREAM = 0, 1, 2, 4, 5
COUNTS_MAGIC = b"RPCNT001"


class RunError(RuntimeError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_seconds: float
    samples: int
    valid_metric: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    total_seconds: float = 0.0
    stop_epoch: int = -1
    best_epoch: int = -1
    grads: GradientTracker = field(default_factory=GradientTracker)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "train_seconds", "samples", "valid_metric"])
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.loss), f"{r.train_seconds:.6f}", r.samples, repr(r.valid_metric)])
            w.writerow(["total", "", f"{self.total_seconds:.6f}", "", ""])


@dataclass
class RunResult:
    config: ExperimentConfig
    report: EvalReport
    log: TrainLog
    model: SeqRecModel
    counts: np.ndarray | None
    meta: dict


# ---------------------------------------------------------------- data


@lru_cache(maxsize=8)
def _prepared(path: str, mtime: float, fmt, k: int, max_malformed: float):
    records = corpus_mod.k_core_filter(corpus_mod.load_interactions(path, fmt, max_malformed), k)
    corpus = corpus_mod.build_corpus(records)
    return corpus, corpus_mod.leave_one_out_split(corpus)


def load_dataset(cfg: ExperimentConfig):
    path = str(Path(cfg["data.path"]).resolve())
    return _prepared(path, Path(path).stat().st_mtime, cfg.column_format, cfg["data.k_core"],
                     cfg["data.max_malformed"])


# ---------------------------------------------------------------- counts.bin


def write_counts(path: str | Path, counts: np.ndarray, users: list[int]) -> None:
    """Binary layout: magic, int32 epochs, int32 users, int64 user ids, int32 counts (epochs x users)."""
    counts = np.asarray(counts, dtype=np.int32)
    with open(path, "wb") as fh:
        fh.write(COUNTS_MAGIC)
        np.asarray(counts.shape, dtype="<i4").tofile(fh)
        np.asarray(users, dtype="<i8").tofile(fh)
        counts.astype("<i4").tofile(fh)


def read_counts(path: str | Path) -> tuple[np.ndarray, list[int]]:
    with open(path, "rb") as fh:
        if fh.read(len(COUNTS_MAGIC)) != COUNTS_MAGIC:
            raise ValueError(f"{path}: not a padding-counts file")
        e, u = np.fromfile(fh, dtype="<i4", count=2)
        users = np.fromfile(fh, dtype="<i8", count=u).tolist()
        counts = np.fromfile(fh, dtype="<i4", count=e * u).reshape(e, u)
    return counts, users


# ---------------------------------------------------------------- per-epoch samples


def _gamma_sample(u, inp, tgt, pairs, users, policy: PaddingPolicy, rng) -> PaddedSample:
    """RepPad+ layout, but every padded copy comes from a random other user."""
    others = [v for v in users if v != u]
    if not others:
        i, t, s, c = _rep_pad_plus(inp, tgt, policy, rng)
        return finalize(i, t, s, policy.max_len, c)
    L, N = len(inp), policy.max_len
    if L > N - 2:
        return finalize(inp, tgt, [0] * L, N, 0)

    def pick():
        return pairs[others[int(rng.integers(len(others)))]]

    if N // L <= 1:
        sub_len = N - 1 - L if policy.delimiter else N - L
        oi, ot = pick()
        window, start = random_subseq(oi, min(sub_len, len(oi)), rng)
        wt = ot[start:start + len(window)]
        sep = [0] if policy.delimiter else []
        segs = [0] * (len(window) + len(sep)) + [1] * L
        return finalize(window + sep + list(inp), wt + sep + list(tgt), segs, N, 1)
    pad_num = resolve_m(policy, max_pad_count(L, N), rng)
    out_i, out_t, segs = [], [], []
    for c in range(pad_num):
        oi, ot = pick()
        out_i += oi
        out_t += ot
        segs += [c] * len(oi)
        if policy.delimiter:
            out_i.append(0)
            out_t.append(0)
            segs.append(c)
    return finalize(out_i + list(inp), out_t + list(tgt), segs + [pad_num] * L, N, pad_num)


class SampleBuilder:
    """Produces one epoch's training samples for the configured strategy."""

    def __init__(self, cfg: ExperimentConfig, split, num_items: int):
        self.cfg = cfg
        self.split = split
        self.users = split.users
        self.num_items = num_items
        self.seed = cfg["seed"]
        self.policy = cfg.padding_policy
        self.zero = PaddingPolicy(mode=PadMode.ZERO, max_len=cfg["max_len"])
        self.spec = cfg.augment_spec
        self.kind = cfg["ablation.kind"] or "none"
        self.pairs = {u: training_pair(split.train_items[u]) for u in self.users}
        self.sim = None
        if self.spec is not None and self.spec.op in (AugmentOp.SUBSTITUTE, AugmentOp.INSERT, AugmentOp.CMRSI):
            self.sim = build_similarity(split.train_items, top_s=cfg["augment.sim_top_s"])
        self.alpha_counts = None
        if self.kind == "alpha":
            counts, users = read_counts(cfg["ablation.counts_path"])
            if users != self.users:
                raise ValueError("counts file was recorded on a different user set")
            self.alpha_counts = counts

    def expected_samples(self) -> int | None:
        """Samples per epoch when it is fixed by construction."""
        if self.kind == "alpha":
            return None
        if self.spec is None:
            return len(self.users)
        if self.spec.op is AugmentOp.SLIDE_WINDOW:
            return sum(len([w for w in enumerate_windows(self.split.train_items[u], self.spec.window) if len(w) >= 2])
                       for u in self.users)
        return None

    def build(self, epoch: int) -> tuple[list[PaddedSample], np.ndarray]:
        samples: list[PaddedSample] = []
        counts = np.zeros(len(self.users), dtype=np.int32)
        needs_rng = self.policy.mode is not PadMode.ZERO
        for j, u in enumerate(self.users):
            try:
                inp, tgt = self.pairs[u]
                if self.spec is not None:
                    samples.extend(self._augmented(u, epoch))
                    continue
                if self.kind == "alpha":
                    reps = int(self.alpha_counts[epoch % len(self.alpha_counts), j]) + 1
                    s = pad_sample(inp, tgt, self.zero)
                    samples.extend([s] * reps)
                    continue
                rng = sample_rng(self.seed, epoch, u, PAD_STREAM) if needs_rng else None
                if self.kind == "gamma":
                    s = _gamma_sample(u, inp, tgt, self.pairs, self.users, self.policy,
                                      sample_rng(self.seed, epoch, u, GAMMA_STREAM))
                else:
                    s = pad_sample(inp, tgt, self.policy, rng)
                counts[j] = s.pad_count
                samples.append(s)
            except Exception as exc:
                raise RunError(f"epoch {epoch}, user {u}: {exc}") from exc
        return samples, counts

    def _augmented(self, u: int, epoch: int) -> list[PaddedSample]:
        items = self.split.train_items[u]
        spec = self.spec
        if spec.op is AugmentOp.SLIDE_WINDOW:
            seqs = [w for w in enumerate_windows(items, spec.window) if len(w) >= 2]
        else:
            rng = sample_rng(self.seed, epoch, u, AUGMENT_STREAM)
            aug = apply_augment(spec, items, self.num_items, self.sim, rng)
            seqs = [items] + ([aug] if len(aug) >= 2 else [])
        out = []
        for seq in seqs:
            inp, tgt = training_pair(seq)
            out.append(pad_sample(inp, tgt, self.zero))
        return out


# ---------------------------------------------------------------- run


def _batches(samples: list[PaddedSample], order: np.ndarray, size: int):
    for lo in range(0, len(order), size):
        yield stack_batch([samples[i] for i in order[lo:lo + size]])


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Load, split, train with early stopping, restore the best epoch, evaluate."""
    cfg.validate()
    corpus, split = load_dataset(cfg)
    seed = cfg["seed"]
    mcfg = cfg.model_config
    if cfg["ablation.kind"] == "leakage" and not mcfg.leakage_mask:
        cfg = cfg.replace(model__leakage_mask=True)
        mcfg = cfg.model_config
    model = SeqRecModel(mcfg, corpus.num_items, seed=seed)
    state = AdamState()
    builder = SampleBuilder(cfg, split, corpus.num_items)
    expected = builder.expected_samples()
    monitor = EarlyStopMonitor(cfg["train.patience"])
    metric = cfg["train.monitor"]
    log = TrainLog()
    best_state = model.state_dict()
    all_counts = []
    step = 0
    eval_kw = dict(batch_size=cfg["eval.batch_size"], exclude_history=cfg["eval.exclude_history"])

    for epoch in range(cfg["train.max_epochs"]):
        t0 = time.perf_counter()
        samples, counts = builder.build(epoch)
        if expected is not None and len(samples) != expected:
            raise RunError(f"epoch {epoch}: {len(samples)} samples, expected {expected}")
        all_counts.append(counts)
        order = sample_rng(seed, epoch, 0, SHUFFLE_STREAM).permutation(len(samples))
        losses, weights = [], []
        for b, batch in enumerate(_batches(samples, order, cfg["train.batch_size"])):
            try:
                loss = train_step(model, batch, state, sample_rng(seed, epoch, b, DROPOUT_STREAM))
            except Exception as exc:
                raise RunError(f"epoch {epoch}, batch {b}: {exc}") from exc
            log.grads.record(step, model.params["item_emb"].grad)
            step += 1
            losses.append(loss)
            weights.append(int(batch["loss_mask"].sum()))
        seconds = time.perf_counter() - t0
        ranks = evaluate(model, split, "valid", **eval_kw)
        value = metric_table(ranks)[metric]
        mean_loss = float(np.average(losses, weights=weights)) if sum(weights) else 0.0
        log.epochs.append(EpochRecord(epoch, mean_loss, seconds, len(samples), value))
        logger.info("epoch %d loss %.4f %s %.4f (%.1fs)", epoch, mean_loss, metric, value, seconds)
        stop = monitor.update(value)
        if monitor.improved_last:
            best_state = model.state_dict()
        if stop:
            break

    log.total_seconds = sum(r.train_seconds for r in log.epochs)
    log.stop_epoch = len(log.epochs) - 1
    log.best_epoch = monitor.best_epoch
    model.load_state_dict(best_state)

    report = EvalReport(users=split.users)
    report.add_split("valid", evaluate(model, split, "valid", **eval_kw))
    test_policy = None
    if cfg["ablation.kind"] == "beta":
        test_policy = PaddingPolicy(mode=PadMode.REPPAD_PLUS, m_rule=cfg["padding.m_rule"],
                                    fix_k=cfg["padding.fix_k"], delimiter=cfg["padding.delimiter"],
                                    max_len=cfg["max_len"])
    report.add_split("test", evaluate(model, split, "test", input_policy=test_policy, seed=seed, **eval_kw))

    counts = np.stack(all_counts) if all_counts else None
    meta = {
        "config": cfg.to_flat(),
        "dataset": corpus.summary(),
        "strategy": cfg.strategy_label,
        "best_epoch": log.best_epoch,
        "stop_epoch": log.stop_epoch,
        "num_parameters": model.num_parameters(),
        "train_losses": [r.loss for r in log.epochs],
        "samples_per_epoch": [r.samples for r in log.epochs],
    }
    result = RunResult(cfg, report, log, model, counts, meta)
    if write and cfg["out_dir"]:
        write_outputs(result)
    return result


def write_outputs(result: RunResult) -> Path:
    cfg = result.config
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    result.report.write_json(out / "report.json", result.meta)
    result.report.append_csv(out / "runs.csv", cfg["data.name"] or Path(cfg["data.path"]).stem,
                             cfg["model.backbone"], cfg.strategy_label, cfg["seed"])
    result.log.write_csv(out / "train_log.csv")
    result.log.grads.write_csv(out / "grad_hist.csv")
    result.model.save(out / "model.npz", extra={"strategy": cfg.strategy_label, "seed": cfg["seed"]})
    if cfg["record_counts"] and result.counts is not None:
        write_counts(out / "counts.bin", result.counts, result.report.users)
    return out


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
