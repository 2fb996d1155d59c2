"""Data-based against model-based over the multiplier grid.

Writes ``sweep.csv`` (one row per grid point) in the working directory and
prints a short table.  Run with ``python3 demos/03_compare_sweeps.py``.
"""
# %%
import numpy as np

from bilinear_ddc import DesignConfig, example_system, run_experiment, sweep_eps1
from bilinear_ddc.system import EXAMPLE_DELTA

plant = example_system()
data = run_experiment(plant, T=10, seed=1)
grid = np.logspace(-1, 1, 21)
table = sweep_eps1(DesignConfig(EXAMPLE_DELTA, grid), data=data, sys=plant)
table.save("sweep.json", "sweep.csv")

# %%
print(f"{'eps1':>8} {'det P_DB':>10} {'det P_MB':>10} {'rel dK':>8}")
for row in table.rows:
    db, mb = row.data_based, row.model_based
    f = lambda r: f"{r.detP:10.4f}" if r is not None and r.ok else f"{'-':>10}"
    d = "-" if row.rel_gain_diff is None else f"{row.rel_gain_diff:.4f}"
    print(f"{row.eps1:8.4f} {f(db)} {f(mb)} {d:>8}")

# %% The data-based region is smaller because it must hold for every ||D|| <= delta,
# while the model-based one only needs the true D.
