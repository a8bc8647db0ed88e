"""Noisy 2-D point navigation with linear policies.

The agent starts at ``task.start`` (origin by default).  At each of ``H``
steps it observes its position corrupted by i.i.d. Gaussian noise, applies
``action = clip(W obs + b, -a_max, a_max)``, moves by
``action_gain @ action + drift`` and receives ``-||position - goal||``.

Tasks differ by goal and by dynamics (``action_gain``, ``drift``), so the
best linear policy is task dependent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, Role, SeedSpec, as_param
from .objectives import SPLITS, EvaluationError, Objective

__all__ = [
    "POLICY_DIM",
    "Nav2DTask",
    "LinearPolicy",
    "RolloutResult",
    "TaskDistribution",
    "rollout",
    "simulate",
    "replay_actions",
    "sample_task",
    "task_objective",
    "Nav2DObjective",
]

POLICY_DIM = 6


@dataclass(frozen=True)
class Nav2DTask:
    goal: tuple = (0.5, 0.0)
    obs_noise_std: float = 1.0
    action_gain: tuple = ((1.0, 0.0), (0.0, 1.0))
    drift: tuple = (0.0, 0.0)
    horizon: int = 100
    action_max: float = 0.1
    start: tuple = (0.0, 0.0)

    def __post_init__(self):
        gain = np.asarray(self.action_gain, dtype=float)
        if gain.shape != (2, 2):
            raise DimensionError("action_gain must be 2x2")
        if abs(np.linalg.det(gain)) < 1e-12:
            raise ValueError("action_gain must be invertible")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be >= 1")
        if self.obs_noise_std < 0:
            raise ValueError("obs_noise_std must be >= 0")
        if self.action_max <= 0:
            raise ValueError("action_max must be > 0")
        for name in ("goal", "drift", "start"):
            if np.asarray(getattr(self, name), dtype=float).shape != (2,):
                raise DimensionError(f"{name} must be a 2-vector")
        # store as plain tuples so tasks stay hashable and immutable
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        object.__setattr__(self, "drift", tuple(float(v) for v in self.drift))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "action_gain", tuple(tuple(float(v) for v in row) for row in gain))
        object.__setattr__(self, "horizon", int(self.horizon))


@dataclass(frozen=True)
class LinearPolicy:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def unpack(cls, theta) -> "LinearPolicy":
        theta = as_param(theta, POLICY_DIM)
        return cls(theta[:4].reshape(2, 2).copy(), theta[4:].copy())

    def pack(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.W, dtype=float).reshape(4),
                               np.asarray(self.b, dtype=float).reshape(2)])

    def act(self, obs, action_max: float) -> np.ndarray:
        return np.clip(self.W @ obs + self.b, -action_max, action_max)


@dataclass
class RolloutResult:
    total_reward: float
    positions: np.ndarray
    steps_used: int
    actions: np.ndarray = field(repr=False, default=None)
    rewards: np.ndarray = field(repr=False, default=None)


def simulate(thetas, task: Nav2DTask, obs_noise) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run many policies in lockstep.

    Parameters
    ----------
    thetas : ndarray, shape (n, 6)
        Packed linear policies.
    task : Nav2DTask
    obs_noise : ndarray, shape (n, H, 2)
        Standard normal draws, scaled here by ``task.obs_noise_std``.

    Returns
    -------
    positions : ndarray, shape (n, H + 1, 2)
    actions : ndarray, shape (n, H, 2)
    rewards : ndarray, shape (n, H)
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = len(thetas)
    H = task.horizon
    W = thetas[:, :4].reshape(n, 2, 2)
    b = thetas[:, 4:]
    gain = np.asarray(task.action_gain)
    drift = np.asarray(task.drift)
    goal = np.asarray(task.goal)
    a_max = task.action_max
    noise = np.asarray(obs_noise, dtype=float) * task.obs_noise_std
    if noise.shape != (n, H, 2):
        raise DimensionError(f"obs_noise must have shape {(n, H, 2)}, got {noise.shape}")
    positions = np.empty((n, H + 1, 2))
    actions = np.empty((n, H, 2))
    rewards = np.empty((n, H))
    pos = np.broadcast_to(np.asarray(task.start, dtype=float), (n, 2)).copy()
    positions[:, 0] = pos
    for t in range(H):
        obs = pos + noise[:, t]
        act = np.clip(np.einsum("nij,nj->ni", W, obs) + b, -a_max, a_max)
        with np.errstate(over="ignore", invalid="ignore"):
            pos = pos + act @ gain.T + drift
        if not np.all(np.isfinite(pos)):
            raise EvaluationError(f"non-finite state at step {t + 1}")
        actions[:, t] = act
        positions[:, t + 1] = pos
        rewards[:, t] = -np.hypot(pos[:, 0] - goal[0], pos[:, 1] - goal[1])
    return positions, actions, rewards


def _noise_draws(task: Nav2DTask, rng, n_rollouts: int) -> np.ndarray:
    shape = (n_rollouts, task.horizon, 2)
    if task.obs_noise_std == 0 or rng is None:
        return np.zeros(shape)
    return rng.standard_normal(shape)


def rollout(policy, task: Nav2DTask, rng: np.random.Generator | None = None) -> RolloutResult:
    """Single episode of ``policy`` (a :class:`LinearPolicy` or packed vector)."""
    theta = policy.pack() if isinstance(policy, LinearPolicy) else as_param(policy, POLICY_DIM)
    if task.obs_noise_std > 0 and rng is None:
        raise ValueError("noisy task needs a random generator")
    pos, act, rew = simulate(theta[None], task, _noise_draws(task, rng, 1))
    return RolloutResult(float(rew[0].sum()), pos[0], task.horizon, act[0], rew[0])


def replay_actions(actions, task: Nav2DTask) -> tuple[np.ndarray, float]:
    """Positions and total reward of an open-loop action sequence."""
    actions = np.asarray(actions, dtype=float)
    gain = np.asarray(task.action_gain)
    steps = actions @ gain.T + np.asarray(task.drift)
    positions = np.asarray(task.start) + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    total = -float(np.sum(np.linalg.norm(positions[1:] - np.asarray(task.goal), axis=1)))
    return positions, total


@dataclass(frozen=True)
class TaskDistribution:
    """Uniform distribution over Nav-2D tasks.

    ``gain_range`` scales each axis of the action independently and
    ``flip_prob`` flips the sign of each axis gain, which is what makes a
    single policy insufficient across tasks.  Train and test tasks come from
    disjoint stream partitions.
    """

    goal_low: tuple = (-0.5, -0.5)
    goal_high: tuple = (0.5, 0.5)
    gain_range: tuple = (1.0, 1.0)
    flip_prob: float = 0.0
    drift_low: tuple = (0.0, 0.0)
    drift_high: tuple = (0.0, 0.0)
    obs_noise_std: float = 1.0
    horizon: int = 100
    action_max: float = 0.1
    n_rollouts_per_eval: int = 1

    def __post_init__(self):
        for lo, hi in ((self.goal_low, self.goal_high), (self.drift_low, self.drift_high)):
            if np.any(np.asarray(lo, dtype=float) > np.asarray(hi, dtype=float)):
                raise ValueError("box lower corner exceeds upper corner")
        if not 0 < self.gain_range[0] <= self.gain_range[1]:
            raise ValueError("gain_range must satisfy 0 < low <= high")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")
        if int(self.n_rollouts_per_eval) < 1:
            raise ValueError("n_rollouts_per_eval must be >= 1")
        if int(self.horizon) < 1 or self.obs_noise_std < 0 or self.action_max <= 0:
            raise ValueError("need horizon >= 1, obs_noise_std >= 0, action_max > 0")

    @property
    def dim(self) -> int:
        return POLICY_DIM

    def sample_task(self, which: str, seed: SeedSpec) -> Nav2DTask:
        return sample_task(self, which, seed)

    def sample_objective(self, split: str, seed: SeedSpec) -> "Nav2DObjective":
        return task_objective(self.sample_task(split, seed), self.n_rollouts_per_eval)


def sample_task(dist: TaskDistribution, which: str, seed: SeedSpec) -> Nav2DTask:
    if which not in SPLITS:
        raise ValueError(f"unknown split {which!r}")
    rng = seed.child(Role.TASK, SPLITS[which]).generator()
    goal = rng.uniform(dist.goal_low, dist.goal_high)
    scale = rng.uniform(dist.gain_range[0], dist.gain_range[1], size=2)
    sign = np.where(rng.uniform(size=2) < dist.flip_prob, -1.0, 1.0)
    drift = rng.uniform(dist.drift_low, dist.drift_high)
    return Nav2DTask(goal=tuple(goal), obs_noise_std=dist.obs_noise_std,
                     action_gain=tuple(map(tuple, np.diag(scale * sign))),
                     drift=tuple(drift), horizon=dist.horizon, action_max=dist.action_max)


class Nav2DObjective(Objective):
    """Episodic return of a task as a function of the packed policy."""

    def __init__(self, task: Nav2DTask, n_rollouts_per_eval: int = 1):
        if int(n_rollouts_per_eval) < 1:
            raise ValueError("n_rollouts_per_eval must be >= 1")
        self.task = task
        self.n_rollouts = int(n_rollouts_per_eval)
        super().__init__(POLICY_DIM, self._evaluate_one, stochastic=task.obs_noise_std > 0)

    def _evaluate_one(self, theta, rng=None):
        return self.evaluate_batch(theta[None], None if rng is None else [rng])[0]

    def evaluate_batch(self, thetas, rngs=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        if X.shape[1] != POLICY_DIM:
            raise DimensionError(f"expected dimension {POLICY_DIM}, got {X.shape[1]}")
        n, m = len(X), self.n_rollouts
        if self.stochastic:
            if rngs is None:
                raise ValueError("noisy task needs one random generator per evaluation")
            noise = np.concatenate([_noise_draws(self.task, r, m) for r in rngs])
        else:
            noise = np.zeros((n * m, self.task.horizon, 2))
        _, _, rew = simulate(np.repeat(X, m, axis=0), self.task, noise)
        return rew.sum(axis=1).reshape(n, m).mean(axis=1)


def task_objective(task: Nav2DTask, n_rollouts_per_eval: int = 1) -> Nav2DObjective:
    return Nav2DObjective(task, n_rollouts_per_eval)
