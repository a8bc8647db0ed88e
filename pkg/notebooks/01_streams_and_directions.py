"""
Seeded streams and perturbation directions
==========================================

Every random draw in the package comes from a stream addressed by a master
seed and a path of integers.  Streams with different paths are independent,
and the same path always gives the same numbers.
"""

import numpy as np

from esmaml_hc.core import Role, SeedSpec, cos_angle, sample_direction, sample_directions

root = SeedSpec(0)
a = root.child(3, Role.DIRECTION).generator().standard_normal(3)
b = root.child(3, Role.DIRECTION).generator().standard_normal(3)
c = root.child(4, Role.DIRECTION).generator().standard_normal(3)
print("same path twice:", np.array_equal(a, b))
print("sibling path   :", np.array_equal(a, c))

# Normalized directions live on the sphere of radius sqrt(d).
d = 16
G = sample_directions(1000, d, True, root.child(Role.DIRECTION).generator())
print("norms (min, max):", np.linalg.norm(G, axis=1).min(), np.linalg.norm(G, axis=1).max())

# Raw Gaussian directions have mean norm close to sqrt(d) as well, but spread out.
g = sample_directions(1000, d, False, root.child(Role.OUTER).generator())
print("raw norms (mean, std): %.3f %.3f" % (np.linalg.norm(g, axis=1).mean(), np.linalg.norm(g, axis=1).std()))

# In high dimension a random direction is nearly orthogonal to any fixed vector,
# which is why a single hill-climbing probe rarely points uphill by much.
target = np.ones(d)
cosines = np.array([cos_angle(target, sample_direction(d, True, root.child(k).generator()))
                    for k in range(2000)])
print("cosine to a fixed vector: mean %.3f, 95th percentile %.3f" % (cosines.mean(), np.quantile(cosines, 0.95)))
