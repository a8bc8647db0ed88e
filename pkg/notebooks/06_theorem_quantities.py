"""
Regret guarantee for Batch hill climbing
========================================

The closed forms give the step size ``alpha = xi L / sqrt(T d)``, the regret
bound, and the smallest gradient scale for which the guarantee holds under
bounded noise.  The experiment below runs Batch HC with that step size and
compares measured average regret with the bound.
"""

import numpy as np

from esmaml_hc.core import SeedSpec
from esmaml_hc.objectives import BoundedUniform
from esmaml_hc.theory import (TheoremParams, gaussian_tail_bounds, min_L_threshold, regret_bound,
                              regret_experiment, required_batch_log, sigma_schedule)

print("bound(D=1, L=1, T=100) =", regret_bound(1, 1, 100))
print("alpha for L=2, T=100, d=4:", sigma_schedule(0.5, 2.0, 100, 4))
print("min L with noise 0.05 at T=256:", min_L_threshold(0.05, 256, 0.5, 4.0, 1.0))
req = required_batch_log(2, 1.0, 2, 16)
print("batch needed for W=2, s=1, d=2, T=16: log excess %.2f, P_min %s" % (req.log_excess, req.p_min))
for x in (1.5, 2.0, 3.0):
    lo, hi = gaussian_tail_bounds(x)
    print(f"P[g > {x}] in [{lo:.6f}, {hi:.6f}]")

# %%
params = TheoremParams(d=2, mu=1.0, rho=4.0, xi=0.5)
grid = (16, 64, 256)
for noise in (None, BoundedUniform(0.05)):
    res = regret_experiment(params, 16, 20, SeedSpec(0), T_grid=grid, noise=noise)
    label = "noiseless" if noise is None else "uniform 0.05"
    print(f"{label:12s} avg regret {np.round(res.mean_avg_regret, 4)}  bound {np.round(res.bounds, 1)}"
          f"  slope {res.slope:.2f}")
