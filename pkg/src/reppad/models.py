"""GRU and causal self-attention encoders with tied item embeddings."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import numerics as nx
from .numerics import AdamState, Tape, Tensor, adam_step
from .numerics.autodiff import _emit, tied_softmax_cross_entropy

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class Backbone(str, Enum):
    GRU = "gru"
    SELF_ATTENTION = "self_attention"


@dataclass(frozen=True)
class ModelConfig:
    backbone: Backbone = Backbone.GRU
    embed_dim: int = 64
    max_len: int = 50
    num_blocks: int = 2
    num_heads: int = 1
    dropout: float = 0.2
    hidden_dim: int = 64
    leakage_mask: bool = False
    precision: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "backbone", Backbone(self.backbone))
        if self.embed_dim % self.num_heads:
            raise ValueError("num_heads must divide embed_dim")
        if self.leakage_mask and self.backbone is Backbone.GRU:
            raise ValueError("leakage_mask needs the self_attention backbone (GRU has no attention)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"] = self.backbone.value
        return d


# ---------------------------------------------------------------- GRU primitive


def gru_sequence(xp: Tensor, w_h: Tensor, b_h: Tensor) -> Tensor:
    """Run a GRU over precomputed input projections.

    ``xp`` is (B, N, 3H) holding the [update | reset | candidate] input terms;
    the reset gate multiplies the recurrent candidate term (cuDNN layout).
    Returns all hidden states, (B, N, H). Initial state is zero.
    """
    B, N, H3 = xp.shape
    H = H3 // 3
    if w_h.shape != (H, H3) or b_h.shape != (H3,):
        raise ValueError(f"gru_sequence: xp {xp.shape}, w_h {w_h.shape}, b_h {b_h.shape}")
    X, W, b = xp.values, w_h.values, b_h.values
    dtype = X.dtype
    hs = np.zeros((B, N + 1, H), dtype=dtype)
    zs = np.empty((B, N, H), dtype=dtype)
    rs = np.empty_like(zs)
    ns = np.empty_like(zs)
    hns = np.empty_like(zs)
    for t in range(N):
        hp = hs[:, t] @ W + b
        x = X[:, t]
        z = 1.0 / (1.0 + np.exp(-(x[:, :H] + hp[:, :H])))
        r = 1.0 / (1.0 + np.exp(-(x[:, H:2 * H] + hp[:, H:2 * H])))
        n = np.tanh(x[:, 2 * H:] + r * hp[:, 2 * H:])
        hs[:, t + 1] = n + z * (hs[:, t] - n)
        zs[:, t], rs[:, t], ns[:, t], hns[:, t] = z, r, n, hp[:, 2 * H:]

    def bw(g):
        dX = np.empty_like(X)
        dW = np.zeros_like(W)
        db = np.zeros_like(b)
        dh = np.zeros((B, H), dtype=dtype)
        for t in range(N - 1, -1, -1):
            dh = dh + g[:, t]
            z, r, n, hn, hprev = zs[:, t], rs[:, t], ns[:, t], hns[:, t], hs[:, t]
            da_n = dh * (1.0 - z) * (1.0 - n * n)
            da_z = dh * (hprev - n) * z * (1.0 - z)
            da_r = da_n * hn * r * (1.0 - r)
            dX[:, t, :H] = da_z
            dX[:, t, H:2 * H] = da_r
            dX[:, t, 2 * H:] = da_n
            dhp = np.concatenate([da_z, da_r, da_n * r], axis=1)
            dW += hprev.T @ dhp
            db += dhp.sum(axis=0)
            dh = dh * z + dhp @ W.T
        return dX, dW, db

    return _emit(hs[:, 1:].copy(), (xp, w_h, b_h), bw)


# ---------------------------------------------------------------- masks


def attention_mask(input_ids: np.ndarray) -> np.ndarray:
    """Allowed-attention mask (B, N, N): causal and never attending to token 0."""
    ids = np.atleast_2d(input_ids)
    N = ids.shape[1]
    causal = np.tril(np.ones((N, N), dtype=bool))
    return causal[None] & (ids != 0)[:, None, :]


def apply_leakage_mask(mask: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Forbid attention across repeated copies.

    ``segments`` (B, N) gives each position's copy index (-1 for the zero-pad
    prefix). A query may attend to keys of its own copy or the pad prefix.
    """
    seg = np.atleast_2d(segments)
    same = (seg[:, :, None] == seg[:, None, :]) | (seg[:, None, :] == -1)
    return mask & same


def boundaries_to_segments(n: int, boundaries) -> np.ndarray:
    """Segment ids from copy-boundary positions (delimiter slots or copy starts).

    A delimiter at ``d`` closes the copy it follows, so positions ``> d`` open a
    new segment; the positions listed are the last slot of each copy.
    """
    seg = np.zeros(n, dtype=np.int64)
    for d in sorted(boundaries):
        seg[d + 1:] += 1
    return seg


# ---------------------------------------------------------------- model


class SeqRecModel:
    """Next-item scorer; output scores reuse the item embedding table."""

    def __init__(self, config: ModelConfig, num_items: int, seed: int = 0):
        self.config = config
        self.num_items = num_items
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        d = config.embed_dim
        bound = 1.0 / math.sqrt(d)
        dtype = config.dtype

        def uniform(name, shape):
            self.params[name] = Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                                       requires_grad=True, name=name)

        def const(name, shape, value):
            self.params[name] = Tensor(np.full(shape, value, dtype=dtype), requires_grad=True, name=name)

        uniform("item_emb", (num_items + 1, d))
        if config.backbone is Backbone.GRU:
            h = config.hidden_dim
            uniform("gru.w_x", (d, 3 * h))
            uniform("gru.w_h", (h, 3 * h))
            const("gru.b_x", (3 * h,), 0.0)
            const("gru.b_h", (3 * h,), 0.0)
            if h != d:
                uniform("gru.proj", (h, d))
        else:
            uniform("pos_emb", (config.max_len, d))
            for k in range(config.num_blocks):
                p = f"block{k}."
                for w in ("q", "k", "v", "o", "ff1", "ff2"):
                    uniform(p + "w_" + w, (d, d))
                    const(p + "b_" + w, (d,), 0.0)
                for ln in ("ln_attn", "ln_ff"):
                    const(p + ln + ".gain", (d,), 1.0)
                    const(p + ln + ".bias", (d,), 0.0)
            const("ln_final.gain", (d,), 1.0)
            const("ln_final.bias", (d,), 0.0)

    # -- introspection

    def num_parameters(self) -> int:
        return int(sum(p.values.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.values.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise KeyError(f"missing parameter {k!r}")
            if state[k].shape != p.shape:
                raise ValueError(f"parameter {k!r}: shape {state[k].shape} != expected {p.shape}")
            p.values = np.array(state[k], dtype=p.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- forward

    def encode(self, input_ids, training: bool = False, rng: np.random.Generator | None = None,
               segments: np.ndarray | None = None) -> Tensor:
        ids = np.atleast_2d(np.asarray(input_ids, dtype=np.int64))
        if ids.shape[1] != self.config.max_len:
            raise ValueError(f"input length {ids.shape[1]} != max_len {self.config.max_len}")
        if self.config.backbone is Backbone.GRU:
            return self._encode_gru(ids, training, rng)
        return self._encode_attention(ids, training, rng, segments)

    def _encode_gru(self, ids, training, rng):
        P, c = self.params, self.config
        x = nx.embedding_lookup(P["item_emb"], ids)
        x = nx.dropout(x, c.dropout, rng, training)
        xp = x @ P["gru.w_x"] + P["gru.b_x"]
        h = gru_sequence(xp, P["gru.w_h"], P["gru.b_h"])
        if "gru.proj" in P:
            h = h @ P["gru.proj"]
        return h

    def _encode_attention(self, ids, training, rng, segments):
        P, c = self.params, self.config
        B, N = ids.shape
        d, heads = c.embed_dim, c.num_heads
        dh = d // heads
        dtype = c.dtype
        allowed = attention_mask(ids)
        if c.leakage_mask:
            if segments is None:
                segments = np.zeros_like(ids)
            allowed = apply_leakage_mask(allowed, segments)
        allowed = allowed[:, None]  # broadcast over heads
        timeline = Tensor((ids != 0)[:, :, None].astype(dtype))

        x = nx.embedding_lookup(P["item_emb"], ids) * math.sqrt(d) + P["pos_emb"]
        x = nx.dropout(x, c.dropout, rng, training)
        x = x * timeline
        for k in range(c.num_blocks):
            p = f"block{k}."
            q_in = nx.layer_norm(x, P[p + "ln_attn.gain"], P[p + "ln_attn.bias"])
            q = self._heads(q_in @ P[p + "w_q"] + P[p + "b_q"], B, N, heads, dh)
            kk = self._heads(x @ P[p + "w_k"] + P[p + "b_k"], B, N, heads, dh)
            v = self._heads(x @ P[p + "w_v"] + P[p + "b_v"], B, N, heads, dh)
            scores = (q @ kk.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
            att = nx.softmax(scores, allowed)
            att = nx.dropout(att, c.dropout, rng, training)
            o = (att @ v).transpose(0, 2, 1, 3).reshape(B, N, d)
            o = o @ P[p + "w_o"] + P[p + "b_o"]
            x = q_in + nx.dropout(o, c.dropout, rng, training)
            x = nx.layer_norm(x, P[p + "ln_ff.gain"], P[p + "ln_ff.bias"])
            f = nx.relu(x @ P[p + "w_ff1"] + P[p + "b_ff1"])
            f = nx.dropout(f, c.dropout, rng, training)
            f = f @ P[p + "w_ff2"] + P[p + "b_ff2"]
            x = x + nx.dropout(f, c.dropout, rng, training)
            x = x * timeline
        return nx.layer_norm(x, P["ln_final.gain"], P["ln_final.bias"])

    @staticmethod
    def _heads(t: Tensor, B, N, heads, dh) -> Tensor:
        return t.reshape(B, N, heads, dh).transpose(0, 2, 1, 3)

    def logits(self, hidden: Tensor) -> Tensor:
        """Inner product of each hidden row with every item embedding row."""
        return hidden @ nx.transpose(self.params["item_emb"])

    def score_last(self, input_ids, segments=None) -> np.ndarray:
        """Inference scores (B, |V|+1) at the last position; no tape, no dropout."""
        with nx.no_tape():
            h = self.encode(input_ids, training=False, segments=segments)
            last = Tensor(h.values[:, -1, :])
            return self.logits(last).values

    # -- persistence

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {"version": CHECKPOINT_VERSION, "config": self.config.to_dict(),
                "num_items": self.num_items, "extra": extra or {}}
        arrays = {f"param/{k}": v for k, v in self.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "SeqRecModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            model = cls(ModelConfig(**meta["config"]), meta["num_items"])
            model.load_state_dict({k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")})
        return model


def train_step(model: SeqRecModel, batch, state: AdamState, rng: np.random.Generator | None = None) -> float:
    """Masked full-softmax cross-entropy over the batch, backward, one Adam step.

    ``batch`` is a sequence of :class:`~reppad.padding.PaddedSample` or a
    dict of stacked arrays (``input_ids``, ``target_ids``, ``loss_mask``,
    optional ``segments``). Returns the loss; an all-false mask skips the update.
    """
    if not isinstance(batch, dict):
        batch = stack_batch(batch)
    inputs, targets, mask = batch["input_ids"], batch["target_ids"], batch["loss_mask"]
    if len(inputs) > 256:
        raise ValueError(f"batch of {len(inputs)} exceeds 256")
    if not mask.any():
        logger.warning("batch with an empty loss mask; update skipped")
        return 0.0
    B, N = inputs.shape
    with Tape() as tape:
        h = model.encode(inputs, training=True, rng=rng, segments=batch.get("segments"))
        loss = tied_softmax_cross_entropy(h.reshape(B * N, h.shape[-1]), model.params["item_emb"],
                                          targets.ravel(), mask.ravel())
    model.zero_grad()
    tape.backward(loss)
    adam_step(state, model.params)
    return float(loss.values)


def stack_batch(samples) -> dict[str, np.ndarray]:
    return {
        "input_ids": np.stack([s.input_ids for s in samples]),
        "target_ids": np.stack([s.target_ids for s in samples]),
        "loss_mask": np.stack([s.loss_mask for s in samples]),
        "segments": np.stack([s.segments for s in samples]),
    }
