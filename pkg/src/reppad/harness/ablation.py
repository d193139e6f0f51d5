"""Ablations: vertical re-feeding (alpha), inference-time RepPad+ (beta),
other users' sequences as padding (gamma) and cross-copy attention blocking (leakage)."""
from __future__ import annotations

from pathlib import Path

from .config import ExperimentConfig
from .experiment import RunResult, run_experiment

KINDS = ("alpha", "beta", "gamma", "leakage")


def ablation_config(kind: str, cfg: ExperimentConfig) -> ExperimentConfig:
    if kind not in KINDS:
        raise ValueError(f"unknown ablation {kind!r}; expected one of {KINDS}")
    if kind == "alpha":
        if not cfg["ablation.counts_path"] or not Path(cfg["ablation.counts_path"]).exists():
            raise FileNotFoundError("alpha needs the counts.bin written by a (1,Max) RepPad+ run "
                                    "(set ablation.counts_path)")
        return cfg.replace(padding__mode="zero", ablation__kind="alpha")
    if kind == "beta":
        return cfg.replace(padding__mode="zero", ablation__kind="beta")
    if kind == "gamma":
        return cfg.replace(padding__mode="reppad_plus", ablation__kind="gamma")
    if cfg["model.backbone"] != "self_attention":
        raise ValueError("the leakage ablation needs the self_attention backbone")
    return cfg.replace(padding__mode="reppad_plus", model__leakage_mask=True, ablation__kind="leakage")


def record_counts_run(cfg: ExperimentConfig) -> tuple[RunResult, Path]:
    """(1,Max) RepPad+ run that writes counts.bin for the alpha ablation."""
    if not cfg["out_dir"]:
        raise ValueError("out_dir is required to write counts.bin")
    run_cfg = cfg.replace(padding__mode="reppad_plus", padding__m_rule="rand_from_one",
                          record_counts=True, ablation__kind="none")
    result = run_experiment(run_cfg)
    return result, Path(run_cfg["out_dir"]) / "counts.bin"


def run_ablation(kind: str, cfg: ExperimentConfig) -> RunResult:
    return run_experiment(ablation_config(kind, cfg))
