"""Model-based design on the two-state example.

Run with ``python3 demos/01_model_based.py``.
"""
# %%
import numpy as np

from bilinear_ddc import design_model_based, example_system, verify_design
from bilinear_ddc.system import Ellipsoid, sample_ellipsoid, simulate

np.set_printoptions(precision=4, suppress=True)
plant = example_system()
print("A =\n", plant.A)
print("open-loop eigenvalues:", np.linalg.eigvals(plant.A))

# %% One design at a fixed multiplier.
res = design_model_based(plant, eps1=0.8)
print(res.status.value, "K =", res.K, "det P =", round(res.detP, 4))
print("P =\n", res.P)

# %% The ellipsoid x' P^-1 x <= 1 is the certified region.  Simulate from its edge.
E = Ellipsoid(res.Q)
x0 = sample_ellipsoid(E, 1, "boundary", seed=3)[0]
xs = [x0]
for _ in range(30):
    x = xs[-1]
    u = float(res.K[0] @ x)
    xs.append(simulate(plant, x, [u])[-1])
V = [float(x @ E.Q @ x) for x in xs]
print("V along the trajectory:", np.round(V[:8], 4), "...", f"{V[-1]:.2e}")

# %% Sampled checks of the certificate.
report = verify_design(res, plant, samples=1000, starts=100)
print(report.summary())

# %% Smaller multipliers make the problem infeasible; larger ones shrink the region.
for eps1 in (0.2, 0.4, 0.8, 2.0, 10.0):
    r = design_model_based(plant, eps1)
    print(f"eps1={eps1:5.1f}  {r.status.value:11s}  det P={r.detP if r.ok else float('nan'):.4g}")
