"""Flat-key experiment configuration (``section.key = value``)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..augment import AugmentSpec
from ..corpus import ColumnFormat
from ..models import ModelConfig
from ..padding import PaddingPolicy, PadMode

# key -> (type, default, help)
SCHEMA: dict[str, tuple[type, object, str]] = {
    "data.path": (str, None, "interaction log (user, item, timestamp)"),
    "data.name": (str, "", "dataset label used in reports"),
    "data.user_col": (int, 0, "user column index"),
    "data.item_col": (int, 1, "item column index"),
    "data.time_col": (int, 2, "timestamp column index"),
    "data.delimiter": (str, "tab", "column delimiter: tab, comma, space or a literal"),
    "data.k_core": (int, 5, "k for k-core filtering"),
    "data.max_malformed": (float, 0.01, "tolerated malformed-line fraction"),
    "max_len": (int, 50, "maximum sequence length N"),
    "model.backbone": (str, "gru", "gru | self_attention"),
    "model.embed_dim": (int, 64, "embedding size"),
    "model.num_blocks": (int, 2, "self-attention blocks"),
    "model.num_heads": (int, 1, "attention heads"),
    "model.dropout": (float, 0.2, "dropout rate"),
    "model.hidden_dim": (int, 64, "GRU hidden size"),
    "model.leakage_mask": (bool, False, "block attention across repeated copies"),
    "model.precision": (str, "float32", "float32 | float64"),
    "padding.mode": (str, "zero", "zero | reppad | reppad_plus"),
    "padding.m_rule": (str, "rand_from_one", "fix | max | rand_incl_zero | rand_from_one"),
    "padding.fix_k": (int, 1, "k for the fix rule"),
    "padding.delimiter": (bool, True, "insert token 0 between copies"),
    "augment.op": (str, "none", "baseline operator or none"),
    "augment.ratio": (float, None, "crop/mask/reorder/substitute/insert ratio"),
    "augment.window": (int, None, "slide_window width"),
    "augment.count": (int, None, "items appended by random_items / random_seq_items"),
    "augment.sim_top_s": (int, 10, "similarity list length"),
    "train.batch_size": (int, 256, "batch size"),
    "train.max_epochs": (int, 200, "epoch ceiling"),
    "train.patience": (int, 20, "early-stopping patience"),
    "train.monitor": (str, "NDCG@10", "validation metric for early stopping"),
    "eval.exclude_history": (bool, False, "drop history items from the candidate set"),
    "eval.batch_size": (int, 512, "evaluation batch size"),
    "ablation.kind": (str, "none", "none | alpha | beta | gamma | leakage"),
    "ablation.counts_path": (str, None, "counts.bin recorded by a (1,Max) run (alpha)"),
    "record_counts": (bool, False, "write counts.bin with per-epoch padding counts"),
    "seed": (int, None, "master seed"),
    "out_dir": (str, None, "output directory"),
}

_DELIMS = {"tab": "\t", "comma": ",", "space": None, "whitespace": None}


def parse_value(key: str, raw):
    typ = SCHEMA[key][0]
    if raw is None:
        return None
    if typ is not str and isinstance(raw, str) and raw.strip().lower() in ("none", "null", ""):
        return None
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: not a boolean: {raw!r}")
    return typ(raw)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        cfg = cls()
        cfg.update(flat)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            flat = _flatten(json.loads(text))
        else:
            flat = {}
            for n, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{n}: expected key=value")
                k, v = line.split("=", 1)
                flat[k.strip()] = v.strip()
        return cls.from_flat(flat)

    def update(self, flat: dict) -> "ExperimentConfig":
        for k, v in flat.items():
            if k not in SCHEMA:
                raise KeyError(f"unknown config key {k!r}")
            self.values[k] = parse_value(k, v)
        return self

    def replace(self, **flat) -> "ExperimentConfig":
        """Copy with overrides; dotted keys are written with ``__`` (``padding__mode``)."""
        new = ExperimentConfig(dict(self.values))
        new.update({k.replace("__", "."): v for k, v in flat.items()})
        return new

    def __getitem__(self, key):
        return self.values[key]

    def to_flat(self) -> dict:
        return dict(self.values)

    # -- typed views

    @property
    def column_format(self) -> ColumnFormat:
        d = self["data.delimiter"]
        return ColumnFormat(self["data.user_col"], self["data.item_col"], self["data.time_col"],
                            _DELIMS.get(d, d))

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            backbone=self["model.backbone"], embed_dim=self["model.embed_dim"], max_len=self["max_len"],
            num_blocks=self["model.num_blocks"], num_heads=self["model.num_heads"],
            dropout=self["model.dropout"], hidden_dim=self["model.hidden_dim"],
            leakage_mask=self["model.leakage_mask"], precision=self["model.precision"])

    @property
    def padding_policy(self) -> PaddingPolicy:
        return PaddingPolicy(mode=self["padding.mode"], m_rule=self["padding.m_rule"],
                             fix_k=self["padding.fix_k"], delimiter=self["padding.delimiter"],
                             max_len=self["max_len"])

    @property
    def augment_spec(self) -> AugmentSpec | None:
        if self["augment.op"] in (None, "none"):
            return None
        return AugmentSpec(self["augment.op"], ratio=self["augment.ratio"], window=self["augment.window"],
                           count=self["augment.count"])

    @property
    def strategy_label(self) -> str:
        spec = self.augment_spec
        label = spec.op.value if spec else self.padding_policy.label
        kind = self["ablation.kind"]
        if kind not in (None, "none"):
            label += f"+{kind}"
        return label

    def validate(self, need_seed: bool = True) -> None:
        if not self["data.path"]:
            raise ValueError("data.path is required")
        if need_seed and self["seed"] is None:
            raise ValueError("seed is required")
        self.model_config
        policy = self.padding_policy
        if self.augment_spec is not None and policy.mode is not PadMode.ZERO:
            raise ValueError("exactly one augmentation strategy per run: augment.op needs padding.mode=zero")
        kind = self["ablation.kind"]
        if kind not in (None, "none", "alpha", "beta", "gamma", "leakage"):
            raise ValueError(f"unknown ablation kind {kind!r}")
        if kind == "alpha" and not self["ablation.counts_path"]:
            raise ValueError("alpha ablation needs ablation.counts_path")
        if self["train.batch_size"] > 256 or self["train.batch_size"] < 1:
            raise ValueError("train.batch_size must lie in [1, 256]")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out
