"""Data-based design: one short experiment, no model.

Run with ``python3 demos/02_data_based.py``.
"""
# %%
import numpy as np

from bilinear_ddc import (
    DesignConfig,
    best_design,
    design_data_based,
    diagnose,
    example_system,
    run_experiment,
    sweep_eps1,
    verify_design,
)
from bilinear_ddc.system import EXAMPLE_DELTA

np.set_printoptions(precision=4, suppress=True)
plant = example_system()  # only used to generate data and to check the result

# %% Ten samples with random inputs.
data = run_experiment(plant, T=10, seed=1)
print(diagnose(data).to_dict())

# %% delta bounds ||D||; here it overapproximates the true norm by 20%.
print("||D|| =", np.linalg.norm(plant.D, 2), "delta =", EXAMPLE_DELTA)
res = design_data_based(data, DesignConfig(EXAMPLE_DELTA, 0.8))
print(res.status.value, "K =", res.K, "det P =", round(res.detP, 4))

# %% The gain is the data combination U0 G_K, and X0 G_K = I.
print("X0 G_K =\n", data.X0 @ res.G_K)
print("U0 G_K =", data.U0 @ res.G_K)

# %% Other input realizations give the same ellipsoid: with ten samples the
# closed-loop matrices are free enough that only P matters.
for seed in (2, 3, 4):
    r = design_data_based(run_experiment(plant, T=10, seed=seed), DesignConfig(EXAMPLE_DELTA, 0.8))
    print(f"seed {seed}: det P = {r.detP:.6f}  K = {r.K}")

# %% Line search over the multiplier.
table = sweep_eps1(DesignConfig(EXAMPLE_DELTA, np.logspace(-3, 2, 50)), data=data)
best = best_design(table)
print(f"{len(table.feasible())}/50 feasible, best eps1={best.eps1:.4g}, det P={best.detP:.4f}")

# %% Sampled checks, including 50 random D with ||D|| <= delta.
print(verify_design(best, plant, samples=1000, num_D=50).summary())
