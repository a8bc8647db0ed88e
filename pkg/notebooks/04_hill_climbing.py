"""
Three hill-climbing operators under noise
=========================================

Sequential compares one probe with the incumbent.  Average re-evaluates one
probe and the incumbent P times each.  Batch evaluates P different probes once
and keeps the best.  At equal evaluation budget Batch tends to move further,
because a noisy best of many probes still points roughly uphill.
"""

import numpy as np

from esmaml_hc.adaptation import AdaptationConfig, adapt
from esmaml_hc.core import SeedSpec
from esmaml_hc.objectives import IidGaussian, NoisyObjective, make_quadratic

q = make_quadratic(8, 1.0, 4.0, SeedSpec(0), optimum=np.full(8, 1.0))
start = np.zeros(8)
budget, runs = 400, 50
print("start regret %.3f, budget %d evaluations" % (q.f_opt - q.evaluate(start), budget))

for std in (0.0, 0.5, 2.0):
    line = [f"noise sd {std:3.1f}:"]
    for variant, P in (("sequential", 1), ("average", 10), ("batch", 10)):
        cfg = AdaptationConfig.for_budget(variant, P, budget, alpha=0.1)
        regrets = [q.f_opt - q.evaluate(adapt(start, NoisyObjective(q, IidGaussian(std)), cfg, SeedSpec(r)))
                   for r in range(runs)]
        line.append(f"{variant}(Q={cfg.Q}) {np.mean(regrets):6.3f}")
    print("  ".join(line))
