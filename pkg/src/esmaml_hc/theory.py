"""Closed-form convergence quantities for batch hill climbing, and an
empirical regret experiment on strongly concave quadratics.

Notation: ``d`` dimension, ``T`` number of HC steps, ``(mu, rho)`` curvature
bounds, ``D`` domain diameter, ``L`` gradient-norm scale, ``Lambda`` noise
band, ``W`` corrupted evaluations per step, ``xi`` in (0, 1) the step-size
fraction, ``s`` the confidence parameter and ``phi0`` the angle threshold.

``L`` plays two roles in the analysis (a lower bound on the gradient norm in
the hypotheses, an upper bound inside the argument).  It is kept as one
scalar here; :meth:`QuadraticConcave.gradient_norm_range` reports both the
infimum and supremum for a concrete instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptation import AdaptationConfig, hc_batch
from .core import Role, SeedSpec
from .objectives import CapabilityError, NoisyObjective, QuadraticConcave, make_quadratic

__all__ = [
    "TheoremParams",
    "HypothesisError",
    "regret_bound",
    "sigma_schedule",
    "min_L_threshold",
    "BatchRequirement",
    "required_batch_log",
    "gaussian_tail_bounds",
    "tau",
    "tau_taylor_lower",
    "gradient_length_bound",
    "success_probability",
    "empirical_average_regret",
    "loglog_slope",
    "RegretSetup",
    "RegretRow",
    "RegretResult",
    "regret_setup",
    "L_MODES",
    "regret_run",
    "regret_experiment",
]


class HypothesisError(ValueError):
    """The requested theorem hypothesis cannot be satisfied."""


@dataclass(frozen=True)
class TheoremParams:
    d: int = 2
    T: int = 100
    mu: float = 1.0
    rho: float = 4.0
    D: float = 3.0
    L: float | None = None
    Lambda: float = 0.0
    W: int = 0
    xi: float = 0.5
    s: float = 1.0
    phi0: float | None = None

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError("d must be >= 1")
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.mu < self.rho:
            raise ValueError("need 0 < mu < rho")
        if not 0 < self.xi < 1:
            raise ValueError("xi must be in (0, 1)")
        if self.s <= 0:
            raise ValueError("s must be > 0")
        if self.D < 0 or self.Lambda < 0 or self.W < 0:
            raise ValueError("D, Lambda and W must be >= 0")
        if self.L is not None and self.L <= 0:
            raise ValueError("L must be > 0")
        if self.phi0 is not None and not 0 < self.phi0 < math.pi / 4:
            raise ValueError("phi0 must be in (0, pi/4)")


def regret_bound(D: float, L: float, T: int) -> float:
    """``(D^2/2 + (L + 4 L^2/sqrt(T))^2 + 8 D L^2) / sqrt(T)``."""
    if T < 1 or D < 0 or L <= 0:
        raise ValueError("need T >= 1, D >= 0, L > 0")
    rt = math.sqrt(T)
    return (D * D / 2 + (L + 4 * L * L / rt) ** 2 + 8 * D * L * L) / rt


def sigma_schedule(xi: float, L: float, T: int, d: int) -> float:
    """Perturbation scale ``xi L / sqrt(T d)``."""
    if not 0 < xi < 1 or L <= 0 or T < 1 or d < 1:
        raise ValueError("need 0 < xi < 1, L > 0, T >= 1, d >= 1")
    return xi * L / math.sqrt(T * d)


def min_L_threshold(Lambda: float, T: int, xi: float, rho: float, mu: float) -> float:
    """Smallest admissible ``L``: ``sqrt(16 Lambda T / (7 xi) / (1 - 4 (rho - mu) xi / 7))``."""
    if Lambda < 0 or T < 1 or not 0 < xi < 1:
        raise ValueError("need Lambda >= 0, T >= 1, 0 < xi < 1")
    denom = 1 - 4 * (rho - mu) * xi / 7
    if denom <= 0:
        raise HypothesisError(f"1 - 4(rho-mu)xi/7 = {denom} <= 0: no L satisfies the hypothesis")
    return math.sqrt(16 * Lambda * T / (7 * xi) / denom)


@dataclass(frozen=True)
class BatchRequirement:
    """``P >= W + exp(log_excess)``; ``p_min`` is None when it overflows a float."""

    log_excess: float
    p_min: int | None
    overflow: bool


def required_batch_log(W: int, s: float, d: int, T: int) -> BatchRequirement:
    """Batch size needed for the high-probability guarantee (natural log)."""
    if s <= 0 or d < 1 or T < 1 or W < 0:
        raise ValueError("need s > 0, d >= 1, T >= 1, W >= 0")
    exponent = 3 * s * d * math.sqrt(T)
    log_excess = exponent * math.log(d)
    try:
        excess = float(d) ** exponent  # exact for integer powers of integers
    except OverflowError:
        return BatchRequirement(log_excess, None, True)
    if math.isinf(excess):
        return BatchRequirement(log_excess, None, True)
    return BatchRequirement(log_excess, int(W) + math.ceil(excess), False)


def gaussian_tail_bounds(x: float) -> tuple[float, float]:
    """Lower and upper bounds on ``P[g > x]`` for standard normal ``g``.

    The lower bound is negative for ``x <= 1`` and is clamped at 0.
    """
    if not x > 0:
        raise ValueError("x must be > 0")
    phi = math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    lower = max(0.0, (1 / x - 1 / x**3) * phi)
    return lower, phi / x


def tau(phi0: float) -> float:
    return math.cos(phi0) - math.cos(2 * phi0)


def tau_taylor_lower(phi0: float) -> float:
    return 1.5 * phi0**2 - 0.625 * phi0**4


def gradient_length_bound(rho: float, mu: float, phi0: float, d: int, sigma: float,
                          Lambda: float, check_mode: bool = False) -> float:
    """Largest gradient norm compatible with a badly aligned argmax:
    ``(rho - mu) sqrt(d) sigma / (2 tau) + 2 Lambda / (sigma tau sqrt(d))``.

    ``phi0`` must lie in ``(0, pi/4)`` unless ``check_mode`` is set, in which
    case any angle with ``tau > 0`` is accepted.
    """
    if not check_mode and not 0 < phi0 < math.pi / 4:
        raise ValueError("phi0 must be in (0, pi/4)")
    if sigma <= 0 or d < 1 or Lambda < 0:
        raise ValueError("need sigma > 0, d >= 1, Lambda >= 0")
    t = tau(phi0)
    if t <= 0:
        raise ValueError(f"tau = {t} <= 0")
    rd = math.sqrt(d)
    return (rho - mu) / (2 * t) * rd * sigma + 2 * Lambda / (sigma * t * rd)


def success_probability(T: int, s: float) -> float:
    """Probability level ``1 - T e^{-s}`` of the guarantee (may be negative)."""
    return 1 - T * math.exp(-s)


def empirical_average_regret(trace_or_values, f_opt: float) -> float:
    """Mean of ``f_opt - f(theta_t)`` over ``t = 0..T-1``.

    Accepts an :class:`AdaptationTrace` with true values or a plain sequence.
    """
    if hasattr(trace_or_values, "true_iterate_values"):
        values = trace_or_values.true_iterate_values()
        if values is None:
            raise CapabilityError("trace has no noiseless values")
    else:
        values = np.asarray(trace_or_values, dtype=float)
    if len(values) == 0:
        raise ValueError("empty trace")
    return float(np.mean(f_opt - np.asarray(values)))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# --- regret experiment -------------------------------------------------------

@dataclass
class RegretSetup:
    """Concrete quadratic, start point and gradient scale for a regret run."""

    objective: QuadraticConcave
    theta0: np.ndarray
    D: float
    L_inf: float
    L_sup: float
    L_start: float
    L: float


L_MODES = ("start", "sup", "inf")


def regret_setup(params: TheoremParams, seed: SeedSpec, start_distance: float = 1.0,
                 domain_scale: float = 1.5, L_mode: str = "start") -> RegretSetup:
    """Fixed ``(mu, rho)`` quadratic with its maximizer at ``start_distance`` from
    the origin (the start point).

    The working domain is the ball around the start of diameter
    ``D = 2 * domain_scale * start_distance``.  Unless ``params.L`` is set,
    ``L`` is the gradient norm at the start (``L_mode="start"``), or the
    infimum / supremum of the gradient norm over the domain.
    """
    if L_mode not in L_MODES:
        raise ValueError(f"L_mode must be one of {L_MODES}")
    rng = seed.child(Role.INSTANCE).generator()
    u = rng.standard_normal(params.d)
    u /= np.linalg.norm(u)
    D = 2 * domain_scale * start_distance
    q = make_quadratic(params.d, params.mu, params.rho, seed, optimum=start_distance * u,
                       diameter=D, center=np.zeros(params.d))
    lo, hi = q.gradient_norm_range()
    theta0 = np.zeros(params.d)
    at_start = float(np.linalg.norm(q.gradient(theta0)))
    if params.L is not None:
        L = float(params.L)
    else:
        L = {"start": at_start, "sup": hi, "inf": lo}[L_mode]
    if not L > 0:
        raise HypothesisError("gradient scale L must be > 0")
    return RegretSetup(q, theta0, D, lo, hi, at_start, L)


@dataclass
class RegretRow:
    T: int
    run: int
    final_regret: float
    avg_regret: float
    bound: float
    evals: int
    corrupted: int = 0


def regret_run(setup: RegretSetup, params: TheoremParams, T: int, P: int, noise,
               seed: SeedSpec, run: int) -> RegretRow:
    """One batch-HC run of ``T`` steps with ``alpha = sigma_schedule``."""
    alpha = sigma_schedule(params.xi, setup.L, T, params.d)
    cfg = AdaptationConfig("batch", alpha=alpha, Q=T, P=P, normalize_directions=True)
    nobj = NoisyObjective(setup.objective, noise)
    theta, trace = hc_batch(setup.theta0, nobj, cfg, seed.child(run))
    f_opt = setup.objective.f_opt
    final = f_opt - setup.objective.evaluate(theta)
    avg = empirical_average_regret(trace, f_opt)
    corrupted = int(sum(s.corrupted.sum() for s in trace.steps))
    return RegretRow(T, run, final, avg, regret_bound(setup.D, setup.L, T), nobj.eval_count, corrupted)


def _regret_task(args):
    setup, params, T, P, noise, seed, run = args
    return regret_run(setup, params, T, P, noise, seed, run)


@dataclass
class RegretResult:
    rows: list
    T_grid: list
    mean_avg_regret: list
    mean_final_regret: list
    bounds: list
    slope: float
    setup: RegretSetup = field(repr=False)


def regret_experiment(params: TheoremParams, batch: int, runs: int, seed: SeedSpec,
                      T_grid=(16, 64, 256, 1024), noise=None, start_distance: float = 1.0,
                      L_mode: str = "start", map_fn=map) -> RegretResult:
    """Average regret of batch HC over ``runs`` seeded runs for each ``T``.

    The slope is fitted to the mean average regret against ``T`` on log-log
    axes (NaN for a single grid point).
    """
    setup = regret_setup(params, seed.child(Role.INSTANCE), start_distance, L_mode=L_mode)
    jobs = [(setup, params, int(T), int(batch), noise, seed.child(Role.START, int(T)), r)
            for T in T_grid for r in range(int(runs))]
    rows = list(map_fn(_regret_task, jobs))
    mean_avg, mean_final, bounds = [], [], []
    for T in T_grid:
        sel = [r for r in rows if r.T == T]
        mean_avg.append(float(np.mean([r.avg_regret for r in sel])))
        mean_final.append(float(np.mean([r.final_regret for r in sel])))
        bounds.append(regret_bound(setup.D, setup.L, int(T)))
    if len(T_grid) < 2:
        slope = float("nan")
    else:
        slope = loglog_slope(T_grid, mean_avg) if min(mean_avg) > 0 else float("-inf")
    return RegretResult(rows, [int(t) for t in T_grid], mean_avg, mean_final, bounds, slope, setup)
