"""
Running experiments from a config
=================================

The harness ties the pieces together: load and split the log, build padded
samples each epoch, train with early stopping, and evaluate the best state.
The same flows are available from the `reppad` command line.
"""
import tempfile
from pathlib import Path

from reppad.harness.config import ExperimentConfig
from reppad.harness.experiment import run_experiment
from reppad.harness.grid import run_variant_grid
from reppad.harness.synth import SynthConfig, synthesize

work = Path(tempfile.mkdtemp())
log = synthesize(work / "data", SynthConfig(num_users=400, num_items=150, num_topics=5, seed=0))

base = ExperimentConfig.from_flat({"data.path": str(log), "max_len": 20, "model.embed_dim": 16,
                                   "model.hidden_dim": 16, "train.max_epochs": 3, "seed": 0})
for mode in ("zero", "reppad_plus"):
    res = run_experiment(base.replace(padding__mode=mode, padding__m_rule="max"), write=False)
    print(mode, {k: round(v, 4) for k, v in res.report.metrics["test"].items()})
    print("  epoch seconds", [round(e.train_seconds, 2) for e in res.log.epochs])

# the variant grid covers zero padding and every (mode, rule, delimiter) cell
rows, failures = run_variant_grid(base.replace(train__max_epochs=1, out_dir=str(work / "grid")))
for r in rows[:5]:
    print(r["mode"], r["m_rule"], r["delimiter"], round(r["HR@10"], 4), r["imp_o_HR@10"])
print((work / "grid" / "grid.csv").read_text().splitlines()[0])
