"""The m-rule x delimiter x {RepPad, RepPad+} variant grid plus the zero-padding baseline."""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

from ..evaluation import METRICS
from .config import ExperimentConfig
from .experiment import run_experiment

logger = logging.getLogger(__name__)

M_RULES = ("fix", "max", "rand_incl_zero", "rand_from_one")
MODES = ("reppad", "reppad_plus")


def grid_cells(base: ExperimentConfig) -> list[ExperimentConfig]:
    cells = [base.replace(padding__mode="zero")]
    for mode in MODES:
        for rule in M_RULES:
            for delim in (True, False):
                cells.append(base.replace(padding__mode=mode, padding__m_rule=rule, padding__delimiter=delim))
    return cells


def relative_improvement(value: float, reference: float) -> float:
    if reference == 0:
        return math.nan if value == 0 else math.inf
    return (value - reference) / reference


def aggregate(rows: list[dict], split: str = "test") -> list[dict]:
    """Add Imp-O (over zero padding) and Imp-R (RepPad+ over RepPad, same rule/delimiter) columns."""
    base = next((r for r in rows if r["mode"] == "zero"), None)
    reppad = {(r["m_rule"], r["delimiter"]): r for r in rows if r["mode"] == "reppad"}
    out = []
    for r in rows:
        row = dict(r)
        for m in METRICS:
            v = r["metrics"][split][m]
            row[m] = v
            row[f"imp_o_{m}"] = relative_improvement(v, base["metrics"][split][m]) if base else math.nan
            ref = reppad.get((r["m_rule"], r["delimiter"])) if r["mode"] == "reppad_plus" else None
            row[f"imp_r_{m}"] = relative_improvement(v, ref["metrics"][split][m]) if ref else ""
        del row["metrics"]
        out.append(row)
    return out


def write_grid_csv(rows: list[dict], path: str | Path) -> None:
    cols = ["mode", "m_rule", "delimiter", "seed"] + list(METRICS)
    cols += [f"imp_o_{m}" for m in METRICS] + [f"imp_r_{m}" for m in METRICS]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run_variant_grid(base: ExperimentConfig, out_dir: str | Path | None = None,
                     runner=run_experiment) -> tuple[list[dict], list[tuple[str, str]]]:
    """Run all 17 cells; returns (aggregated rows, failures). A failed cell is listed, not fatal."""
    out_dir = Path(out_dir or base["out_dir"] or "grid_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for cell in grid_cells(base):
        mode = cell["padding.mode"]
        rule = "" if mode == "zero" else cell["padding.m_rule"]
        delim = "" if mode == "zero" else cell["padding.delimiter"]
        name = "zero" if mode == "zero" else f"{mode}_{rule}_{'delim' if delim else 'nodelim'}"
        cell = cell.replace(out_dir=str(out_dir / name))
        try:
            result = runner(cell)
        except Exception as exc:  # keep completed cells
            logger.exception("grid cell %s failed", name)
            failures.append((name, repr(exc)))
            continue
        rows.append({"mode": mode, "m_rule": rule, "delimiter": delim, "seed": cell["seed"],
                     "metrics": result.report.metrics})
    agg = aggregate(rows)
    write_grid_csv(agg, out_dir / "grid.csv")
    if failures:
        (out_dir / "failures.txt").write_text("".join(f"{n}\t{e}\n" for n, e in failures))
    return agg, failures
