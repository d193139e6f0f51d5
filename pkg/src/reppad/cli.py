"""Command-line entry point: ``reppad <subcommand> [--config FILE] [--key value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .evaluation import EvalReport, evaluate
from .harness.ablation import KINDS, run_ablation
from .harness.config import SCHEMA, ExperimentConfig
from .harness.experiment import load_dataset, run_experiment
from .harness.grid import run_variant_grid
from .harness.synth import SynthConfig, synthesize
from .models import SeqRecModel
from .padding import format_sample, pad_training_sequence, sample_rng

SEEDED = ("train", "grid", "ablate")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value or JSON config file")
    g = p.add_argument_group("config overrides")
    for key, (_, default, text) in SCHEMA.items():
        g.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar="V",
                       help=f"{text} (default: {default})")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    cfg.update({k: getattr(args, k) for k in SCHEMA if hasattr(args, k)})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reppad", description="Padding experiments for next-item recommenders")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest, k-core filter, split and summarize a log")
    _add_config_flags(p)

    for name, text in (("train", "train one configuration"), ("grid", "run the padding variant grid")):
        _add_config_flags(sub.add_parser(name, help=text))

    p = sub.add_parser("ablate", help="run one ablation")
    p.add_argument("kind", choices=KINDS)
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="report path (default: stdout)")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic Markov corpus")
    p.add_argument("--out", required=True, help="output directory")
    for key, val in SynthConfig().__dict__.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"synth_{key}", type=type(val), default=val)

    p = sub.add_parser("pad-debug", help="print the padded (input, target, mask) triple of a training sequence")
    p.add_argument("items", nargs="+", type=int, help="training item indices, oldest first")
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--user", type=int, default=0)
    _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cmd = args.command

    if cmd == "synth":
        cfg = SynthConfig(**{k: getattr(args, f"synth_{k}") for k in SynthConfig().__dict__})
        print(synthesize(args.out, cfg))
        return 0

    cfg = _config(args)
    if cmd in SEEDED and cfg["seed"] is None:
        print(f"reppad {cmd}: --seed is required", file=sys.stderr)
        return 2

    if cmd == "pad-debug":
        seed = cfg["seed"] or 0
        sample = pad_training_sequence(args.items, cfg.padding_policy, sample_rng(seed, args.epoch, args.user))
        print(format_sample(sample))
        return 0

    if cmd == "prepare":
        cfg.validate(need_seed=False)
        corpus, _ = load_dataset(cfg)
        summary = corpus.summary()
        if cfg["out_dir"]:
            Path(cfg["out_dir"]).mkdir(parents=True, exist_ok=True)
            corpus.write_summary(Path(cfg["out_dir"]) / "summary.json")
        print(json.dumps(summary, indent=1, sort_keys=True))
        return 0

    if cmd == "train":
        result = run_experiment(cfg)
        print(json.dumps(result.report.metrics, indent=1, sort_keys=True))
        return 0

    if cmd == "grid":
        rows, failures = run_variant_grid(cfg)
        for r in rows:
            print(r["mode"], r["m_rule"], r["delimiter"], f"HR@10={r['HR@10']:.4f}", f"NDCG@10={r['NDCG@10']:.4f}")
        for name, err in failures:
            print(f"FAILED {name}: {err}", file=sys.stderr)
        return 1 if failures else 0

    if cmd == "ablate":
        result = run_ablation(args.kind, cfg)
        print(json.dumps(result.report.metrics, indent=1, sort_keys=True))
        return 0

    if cmd == "eval":
        cfg.validate(need_seed=False)
        model = SeqRecModel.load(args.checkpoint)
        corpus, split = load_dataset(cfg)
        if corpus.num_items != model.num_items:
            print(f"checkpoint has {model.num_items} items, dataset has {corpus.num_items}", file=sys.stderr)
            return 2
        report = EvalReport(users=split.users)
        kw = dict(batch_size=cfg["eval.batch_size"], exclude_history=cfg["eval.exclude_history"])
        for which in ("valid", "test"):
            report.add_split(which, np.asarray(evaluate(model, split, which, **kw)))
        if args.out:
            report.write_json(args.out, {"checkpoint": str(args.checkpoint)})
        print(json.dumps(report.metrics, indent=1, sort_keys=True))
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
