"""
Running experiments from configuration
======================================

Experiments are described by JSON configs (or a shipped preset), run into an
output directory, and summarised as CSV.  The same runs are available from
the shell as ``esmaml-hc <kind> --config cfg.json --out dir``.
"""

import json
import os
import tempfile

from esmaml_hc.harness import emit_plot_data, parse, run
from esmaml_hc.harness.experiments import read_csv

out = tempfile.mkdtemp(prefix="esmaml-hc-")

text = json.dumps({
    "kind": "bound",
    "theorem": {"d": 2, "mu": 1.0, "rho": 4.0, "D": 1.0, "L": 1.0, "T_grid": [1, 100, 10000]},
})
run(parse(text), os.path.join(out, "bound"), source_text=text)
for row in read_csv(os.path.join(out, "bound", "bound.csv")):
    print("T", row["T"], "bound", row["bound"], "sigma", row["sigma"])

text = json.dumps({
    "kind": "compare-hc",
    "task": {"type": "nav2d", "gain_range": [0.5, 1.5]},
    "compare": {"P_values": [2, 10], "n_tasks": 6, "seeds_per_task": 2, "eval_rollouts": 10},
})
run(parse(text), os.path.join(out, "compare"), source_text=text)
for row in read_csv(os.path.join(out, "compare", "compare_summary.csv")):
    print(row["variant"], "P", row["P"], "Q", row["Q"], "mean gap", round(float(row["mean_gap"]), 3))

print("plot data:", [os.path.basename(p) for p in emit_plot_data(os.path.join(out, "compare"))])
print("outputs in", out)
