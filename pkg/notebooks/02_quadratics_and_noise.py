"""
Strongly concave quadratics and noisy evaluations
=================================================

A (mu, rho) quadratic has Hessian eigenvalues in [-rho, -mu].  The curvature
check samples point pairs and reports a witness pair when an inequality fails.
"""

import numpy as np

from esmaml_hc.core import SeedSpec
from esmaml_hc.objectives import (Adversarial, BoundedUniform, IidGaussian, NoisyObjective,
                                  make_quadratic, verify_strong_concavity)

q = make_quadratic(4, 1.0, 4.0, SeedSpec(1), diameter=4.0)
print("eigenvalues of A:", np.round(np.linalg.eigvalsh(q.A), 4))
print("optimum value    :", q.f_opt)

check = verify_strong_concavity(q, 1.0, 4.0, 1000, SeedSpec(2))
print("(1, 4) check passes:", bool(check), "after", check.n_checked, "pairs")

too_flat = verify_strong_concavity(q, 3.0, 4.0, 1000, SeedSpec(2))
print("(3, 4) check passes:", bool(too_flat))
w = too_flat.witness
print("witness x", np.round(w["x"], 3), "y", np.round(w["y"], 3))
print(f"  f(y) = {w['f_y']:.4f} exceeds the {w['inequality']} bound {float(w['bound']):.4f}")

# %%
# Noise enters one hill-climbing step at a time.  ``evaluate_step`` draws one
# noise vector for all evaluations of a step, and the adversary corrupts at
# most ``max_corrupt`` of them (by default the best-looking ones).
points = q.optimum + 0.1 * np.random.default_rng(0).standard_normal((6, 4))
for model in (IidGaussian(0.1), BoundedUniform(0.05), Adversarial(0.05, 2)):
    ev = NoisyObjective(q, model).evaluate_step(points, SeedSpec(9))
    print(type(model).__name__.ljust(14), "eps:", np.round(ev.eps, 3), "corrupted:", ev.corrupted.astype(int))
