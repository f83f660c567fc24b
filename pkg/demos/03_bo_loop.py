"""A short Bayesian-optimization run with a constraint and a trust region.

toy_constrained is feasible inside the unit disc; the harness switches EI
to constrained EI because the problem has a constraint.
"""
import tempfile

import numpy as np

from mixedbo.harness import ExperimentConfig, aggregate, export, load_csv, regret_table, run_experiment

cfg = ExperimentConfig("toy_constrained", method="pr_adam", tr=True, n_iterations=8, replications=2, seed=0,
                       acq={"restarts": 8, "max_iterations": 60})
records = run_experiment(cfg)

for rec in records:
    feas = np.mean(rec.feasible)
    print(f"replicate {rec.replicate}: {len(rec)} evaluations, {feas:.0%} feasible, best {rec.incumbents[-1]:.4f}")
    for entry in rec.tr_log[:3]:
        print(f"  iteration {entry['iteration']}: trust-region length {entry['base_length']:.3f}")

out = tempfile.mkdtemp()
paths = export(records, out)
print("wrote", paths["csv"])

# regret curves come back out of the CSV
table = regret_table(load_csv(paths["csv"]))
agg = aggregate(table[("toy_constrained", cfg.label)])
print("mean log10 regret (last 3):", np.round(agg["mean"][-3:], 3))
print("+-2 SE band (last):", np.round([agg["lower"][-1], agg["upper"][-1]], 3))
