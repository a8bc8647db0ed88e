"""Evolution-strategies meta-learning with an arbitrary adaptation operator.

Each outer iteration pairs ``n`` sampled tasks with ``n`` Gaussian
directions, adapts ``theta +/- sigma g_i`` on task ``T_i`` and moves along
``beta / (sigma n) * sum_i v_i g_i`` with ``v_i = (v_i+ - v_i-) / 2``.
Both arms of a pair share the task, the adaptation streams and the
evaluation streams.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .adaptation import AdaptationConfig, ConfigError, adapt
from .core import Role, SeedSpec, as_param, sample_direction
from .objectives import NoNoise, NoisyObjective, Objective

__all__ = [
    "MetaConfig",
    "PairRecord",
    "IterationRecord",
    "MetaTrace",
    "GapResult",
    "task_value",
    "antithetic_step",
    "es_maml_train",
    "train_dr_baseline",
    "evaluate_adaptation",
    "adaptation_gap",
    "META_TRACE_COLUMNS",
]

META_TRACE_COLUMNS = ["iteration", "pair_index", "v_plus", "v_minus", "grad_norm", "budget_used"]


@dataclass(frozen=True)
class MetaConfig:
    sigma: float = 0.1
    beta: float = 0.01
    n: int = 10
    iterations: int = 100
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    normalize_outer: bool = False
    eval_rollouts: int = 1
    noise: object = field(default_factory=NoNoise)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if int(self.n) < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if int(self.iterations) < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if int(self.eval_rollouts) < 1:
            raise ConfigError(f"eval_rollouts must be >= 1, got {self.eval_rollouts}")


@dataclass
class PairRecord:
    v_plus: float
    v_minus: float
    budget: int

    @property
    def v(self) -> float:
        return 0.5 * (self.v_plus - self.v_minus)


@dataclass
class IterationRecord:
    iteration: int
    theta: np.ndarray
    pairs: list
    grad_estimate: np.ndarray

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad_estimate))

    @property
    def budget(self) -> int:
        return sum(p.budget for p in self.pairs)


@dataclass
class MetaTrace:
    records: list = field(default_factory=list)

    @property
    def total_budget(self) -> int:
        return sum(r.budget for r in self.records)

    def rows(self):
        used = 0
        for r in self.records:
            for i, p in enumerate(r.pairs):
                used += p.budget
                yield {"iteration": r.iteration, "pair_index": i,
                       "v_plus": repr(float(p.v_plus)), "v_minus": repr(float(p.v_minus)),
                       "grad_norm": repr(r.grad_norm), "budget_used": used}

    def to_csv(self, fh=None):
        own = fh is None
        if own:
            fh = io.StringIO()
        writer = csv.DictWriter(fh, fieldnames=META_TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return fh.getvalue() if own else None


def task_value(objective: Objective, theta, seed: SeedSpec, n_rollouts: int = 1) -> float:
    """Estimate ``f^T(theta)``: exact for deterministic objectives, else a mean of
    ``n_rollouts`` evaluations on streams ``seed.child(j)``."""
    if not objective.stochastic:
        return objective.evaluate(theta)
    X = np.repeat(as_param(theta, objective.dim)[None], n_rollouts, axis=0)
    rngs = [seed.child(j).generator() for j in range(n_rollouts)]
    return float(np.mean(objective.evaluate_batch(X, rngs)))


def _pair(theta, g, dist, cfg: MetaConfig, seed: SeedSpec) -> PairRecord:
    objective = dist.sample_objective("train", seed)
    values, budget = [], 0
    for sign in (1.0, -1.0):
        nobj = NoisyObjective(objective, cfg.noise)
        adapted = adapt(theta + sign * cfg.sigma * g, nobj, cfg.adaptation, seed.child(Role.ADAPT))
        values.append(task_value(objective, adapted, seed.child(Role.EVAL), cfg.eval_rollouts))
        budget += nobj.eval_count + (cfg.eval_rollouts if objective.stochastic else 1)
    return PairRecord(values[0], values[1], budget)


def antithetic_step(theta, dist, cfg: MetaConfig, seed: SeedSpec, map_fn=map):
    """One outer iteration; returns ``(theta_next, IterationRecord)``.

    ``dist`` is any object with ``dim`` and ``sample_objective(split, seed)``.
    ``map_fn`` may be a parallel map; results do not depend on it.
    """
    theta = as_param(theta, dist.dim)
    d = theta.size
    gs = [sample_direction(d, cfg.normalize_outer, seed.child(i, Role.OUTER).generator())
          for i in range(cfg.n)]
    pair_seeds = [seed.child(i) for i in range(cfg.n)]
    try:
        pairs = list(map_fn(_pair, [theta] * cfg.n, gs, [dist] * cfg.n, [cfg] * cfg.n, pair_seeds))
    except Exception as exc:
        raise RuntimeError(f"outer iteration failed: {exc}") from exc
    G = np.vstack(gs)
    v = np.array([p.v for p in pairs])
    grad = (v @ G) / (cfg.sigma * cfg.n)
    return theta + cfg.beta * grad, IterationRecord(-1, theta.copy(), pairs, grad)


def es_maml_train(init, dist, cfg: MetaConfig, seed: SeedSpec, map_fn=map, callback=None):
    """Run ``cfg.iterations`` antithetic steps from ``init``; returns ``(theta_meta, MetaTrace)``.

    ``callback(k, theta)`` is called after every iteration.
    """
    theta = as_param(init, dist.dim)
    trace = MetaTrace()
    for k in range(int(cfg.iterations)):
        theta, rec = antithetic_step(theta, dist, cfg, seed.child(k), map_fn)
        rec.iteration = k
        trace.records.append(rec)
        if callback is not None:
            callback(k, theta)
    return theta, trace


def train_dr_baseline(init, dist, cfg: MetaConfig, seed: SeedSpec, map_fn=map, callback=None):
    """Domain randomization: the same outer loop with the identity adaptation."""
    cfg = replace(cfg, adaptation=cfg.adaptation.with_Q(0))
    return es_maml_train(init, dist, cfg, seed, map_fn, callback)


@dataclass
class GapResult:
    meta_value: float
    adapted_value: float
    adapted_theta: np.ndarray
    evals: int

    @property
    def gap(self) -> float:
        return self.adapted_value - self.meta_value


def evaluate_adaptation(theta, objective: Objective, U: AdaptationConfig, n_eval_rollouts: int,
                        seed: SeedSpec, noise=None) -> GapResult:
    """Adapt once on ``objective`` and estimate ``f^T`` before and after.

    Both estimates use the same ``n_eval_rollouts`` evaluation streams, which
    are separate from (and not charged to) the adaptation budget.
    """
    nobj = NoisyObjective(objective, noise)
    adapted = adapt(theta, nobj, U, seed.child(Role.ADAPT))
    eval_seed = seed.child(Role.EVAL)
    before = task_value(objective, theta, eval_seed, n_eval_rollouts)
    after = task_value(objective, adapted, eval_seed, n_eval_rollouts)
    return GapResult(before, after, adapted, nobj.eval_count)


def adaptation_gap(theta, objective: Objective, U: AdaptationConfig, n_eval_rollouts: int,
                   seed: SeedSpec, noise=None) -> float:
    """``f^T(U(theta, T)) - f^T(theta)``."""
    return evaluate_adaptation(theta, objective, U, n_eval_rollouts, seed, noise).gap
