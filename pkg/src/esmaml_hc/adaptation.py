"""Hill-climbing adaptation operators.

All three variants keep the incumbent in the argmax and re-evaluate it
noisily at every step:

* ``sequential``: one direction, incumbent and candidate evaluated once.
* ``average``: one direction, incumbent and candidate evaluated ``P`` times
  each, compared by their empirical means.
* ``batch``: ``P`` directions, incumbent and ``P`` candidates evaluated once.

Per-step cost is 2, ``2P`` and ``P + 1`` evaluations respectively.  Ties go
to the incumbent, then to the lowest candidate index.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Role, SeedSpec, as_param, sample_directions
from .objectives import Adversarial, NoisyObjective

__all__ = [
    "VARIANTS",
    "ConfigError",
    "AdaptationConfig",
    "StepRecord",
    "AdaptationTrace",
    "select_index",
    "hc_sequential",
    "hc_average",
    "hc_batch",
    "adapt",
    "adapt_with_trace",
    "TRACE_COLUMNS",
]

VARIANTS = ("sequential", "average", "batch")
TRACE_COLUMNS = ["step", "candidate_index", "is_incumbent", "noisy_value", "true_value", "selected"]


class ConfigError(ValueError):
    """Invalid adaptation or experiment configuration."""


@dataclass(frozen=True)
class AdaptationConfig:
    """Variant and ``(alpha, Q, P)`` of one adaptation run.

    ``Q = 0`` is accepted and makes the operator the identity.  For the
    sequential variant ``P`` is ignored (treated as 1).
    """

    variant: str = "batch"
    alpha: float = 0.05
    Q: int = 5
    P: int = 10
    normalize_directions: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if int(self.Q) < 0:
            raise ConfigError(f"Q must be >= 0, got {self.Q}")
        if int(self.P) < 1:
            raise ConfigError(f"P must be >= 1, got {self.P}")
        object.__setattr__(self, "Q", int(self.Q))
        object.__setattr__(self, "P", 1 if self.variant == "sequential" else int(self.P))

    @property
    def evals_per_step(self) -> int:
        if self.variant == "sequential":
            return 2
        if self.variant == "average":
            return 2 * self.P
        return self.P + 1

    @property
    def total_evals(self) -> int:
        return self.Q * self.evals_per_step

    @classmethod
    def for_budget(cls, variant: str, P: int, budget: int, **kw) -> "AdaptationConfig":
        """Largest ``Q`` whose total cost fits in ``budget`` evaluations."""
        per_step = cls(variant=variant, P=P, Q=0, **kw).evals_per_step
        return cls(variant=variant, P=P, Q=int(budget) // per_step, **kw)

    def with_Q(self, Q: int) -> "AdaptationConfig":
        return replace(self, Q=Q)


@dataclass
class StepRecord:
    step: int
    candidates: np.ndarray  # row 0 is the incumbent
    arms: np.ndarray  # candidate index of each evaluation
    noisy: np.ndarray
    true: np.ndarray | None
    corrupted: np.ndarray
    scores: np.ndarray  # per-candidate value the argmax is taken over
    selected: int

    @property
    def evals(self) -> int:
        return len(self.noisy)

    def candidate_true_values(self) -> np.ndarray | None:
        if self.true is None:
            return None
        out = np.empty(len(self.candidates))
        out[self.arms] = self.true
        return out


@dataclass
class AdaptationTrace:
    variant: str
    theta0: np.ndarray
    steps: list = field(default_factory=list)

    @property
    def iterates(self) -> np.ndarray:
        """``theta_0, ..., theta_Q`` as rows."""
        rows = [self.theta0] + [s.candidates[s.selected] for s in self.steps]
        return np.vstack(rows)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def total_evals(self) -> int:
        return sum(s.evals for s in self.steps)

    def true_iterate_values(self) -> np.ndarray | None:
        """Noiseless ``f(theta_q)`` for ``q = 0..Q-1`` (``None`` if unknown)."""
        if any(s.true is None for s in self.steps):
            return None
        return np.array([s.candidate_true_values()[0] for s in self.steps])

    def noisy_argmax_gaps(self) -> list[float]:
        """For steps without corruption: ``f(selected) - max_i f(candidate_i)``.

        Under noise bounded by ``L`` every entry is ``>= -2 L``.
        """
        out = []
        for s in self.steps:
            if s.true is None or s.corrupted.any():
                continue
            tv = s.candidate_true_values()
            out.append(float(tv[s.selected] - tv.max()))
        return out

    def rows(self):
        for s in self.steps:
            for arm, noisy, true in zip(s.arms, s.noisy,
                                        s.true if s.true is not None else [None] * s.evals):
                yield {
                    "step": s.step,
                    "candidate_index": int(arm),
                    "is_incumbent": int(arm == 0),
                    "noisy_value": repr(float(noisy)),
                    "true_value": "" if true is None else repr(float(true)),
                    "selected": int(arm == s.selected),
                }

    def to_csv(self, fh=None) -> str | None:
        """Write one row per evaluation; returns the text when ``fh`` is None."""
        own = fh is None
        if own:
            fh = io.StringIO()
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return fh.getvalue() if own else None


def select_index(values) -> int:
    """Argmax with ties to the lowest index (the incumbent sits at index 0)."""
    return int(np.argmax(np.asarray(values, dtype=float)))


def _check_variant(cfg: AdaptationConfig, expected: str):
    if cfg.variant != expected:
        raise ConfigError(f"expected variant {expected!r}, got {cfg.variant!r}")


def _hill_climb(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec,
                n_dirs: int, repeats: int):
    theta = as_param(theta, obj.dim)
    trace = AdaptationTrace(cfg.variant, theta.copy())
    d = obj.dim
    for q in range(cfg.Q):
        dirs = sample_directions(n_dirs, d, cfg.normalize_directions,
                                 seed.child(q, Role.DIRECTION).generator())
        candidates = np.vstack([theta, theta + cfg.alpha * dirs])
        arms = np.repeat(np.arange(len(candidates)), repeats)
        ev = obj.evaluate_step(candidates[arms], seed.child(q))
        scores = ev.noisy.reshape(len(candidates), repeats).mean(axis=1)
        sel = select_index(scores)
        trace.steps.append(StepRecord(q, candidates, arms, ev.noisy, ev.true,
                                      ev.corrupted, scores, sel))
        theta = candidates[sel].copy()
    return theta, trace


def hc_sequential(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec):
    """Sequential hill climbing; returns ``(theta_Q, trace)``."""
    _check_variant(cfg, "sequential")
    return _hill_climb(theta, obj, cfg, seed, n_dirs=1, repeats=1)


def hc_average(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec):
    """Average hill climbing; returns ``(theta_Q, trace)``."""
    _check_variant(cfg, "average")
    return _hill_climb(theta, obj, cfg, seed, n_dirs=1, repeats=cfg.P)


def hc_batch(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec):
    """Batch hill climbing; returns ``(theta_Q, trace)``.

    Under an adversarial noise model the number of corruptions per step must
    stay below ``P``.
    """
    _check_variant(cfg, "batch")
    if isinstance(obj.noise, Adversarial) and obj.noise.max_corrupt >= cfg.P:
        raise ConfigError(f"batch HC needs max_corrupt < P, got W={obj.noise.max_corrupt}, P={cfg.P}")
    return _hill_climb(theta, obj, cfg, seed, n_dirs=cfg.P, repeats=1)


_DISPATCH = {"sequential": hc_sequential, "average": hc_average, "batch": hc_batch}


def adapt_with_trace(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec):
    return _DISPATCH[cfg.variant](theta, obj, cfg, seed)


def adapt(theta, obj: NoisyObjective, cfg: AdaptationConfig, seed: SeedSpec) -> np.ndarray:
    """The adaptation operator ``U(theta, task)``: ``theta`` after ``Q`` HC steps."""
    return adapt_with_trace(theta, obj, cfg, seed)[0]
