"""
Noisy 2-D navigation
====================

A point agent starts at the origin and is paid minus its distance to the goal
at each step.  It sees its position through Gaussian noise and acts with a
linear policy ``a = clip(W obs + b)``.  Tasks differ by goal and by a per-axis
action gain, so a policy tuned to one task can be poor on another.
"""

import numpy as np

from esmaml_hc.core import SeedSpec
from esmaml_hc.environments import LinearPolicy, Nav2DTask, TaskDistribution, rollout

task = Nav2DTask(goal=(0.4, -0.3), obs_noise_std=0.0)
homing = LinearPolicy(W=-np.eye(2), b=np.array([0.4, -0.3]))
idle = LinearPolicy(W=np.zeros((2, 2)), b=np.zeros(2))
for name, pol in (("homing", homing), ("idle", idle)):
    r = rollout(pol, task)
    print(f"{name:7s} return {r.total_reward:8.3f}  final position {np.round(r.positions[-1], 3)}")

# Observation noise makes the return a random variable.
noisy = Nav2DTask(goal=(0.4, -0.3), obs_noise_std=1.0)
returns = [rollout(homing, noisy, SeedSpec(5).child(k).generator()).total_reward for k in range(200)]
print("noisy homing return: mean %.2f, sd %.2f" % (np.mean(returns), np.std(returns)))

# %%
# A task family with flipped axes: the homing policy helps on some tasks and
# hurts on others.
dist = TaskDistribution(gain_range=(0.5, 1.5), flip_prob=0.5, obs_noise_std=0.0)
theta = homing.pack()
for k in range(5):
    obj = dist.sample_objective("test", SeedSpec(0, (k,)))
    print(f"task {k}: gain diag {np.round(np.diag(obj.task.action_gain), 2)}  return {obj.evaluate(theta):8.2f}")
