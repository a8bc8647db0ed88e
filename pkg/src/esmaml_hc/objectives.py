"""Objectives, strongly concave quadratics and additive noise models.

Algorithms in this package only ever see noisy values
``f'(theta, eps) = f(theta) + eps`` through a :class:`NoisyObjective`, which
also counts every evaluation (the budget unit).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import ortho_group

from .core import DimensionError, Role, SeedSpec, as_param

__all__ = [
    "EvaluationError",
    "CapabilityError",
    "BudgetExhausted",
    "Objective",
    "QuadraticConcave",
    "make_quadratic",
    "linear_objective",
    "ConcavityCheck",
    "verify_strong_concavity",
    "NoNoise",
    "IidGaussian",
    "BoundedUniform",
    "Adversarial",
    "noise_from_dict",
    "noise_to_dict",
    "corrupted_value",
    "StepEvaluation",
    "NoisyObjective",
    "evaluate_noisy",
    "FixedTask",
    "QuadraticTaskFamily",
    "SPLITS",
]

SPLITS = {"train": 0, "test": 1}


class EvaluationError(RuntimeError):
    """An objective produced a non-finite value."""


class CapabilityError(RuntimeError):
    """An operation needs something the objective does not provide (e.g. a gradient)."""


class BudgetExhausted(RuntimeError):
    """The configured evaluation cap of a :class:`NoisyObjective` was reached."""


class Objective:
    """Scalar objective over ``R^dim`` to be maximized.

    Parameters
    ----------
    dim : int
        Parameter dimension.
    func : callable
        ``func(theta)`` for deterministic objectives, ``func(theta, rng)``
        when ``stochastic`` is set (e.g. episodic returns).
    grad : callable, optional
        Exact gradient ``grad(theta)``.
    diameter : float, optional
        Diameter of the working domain, a ball centred at ``center``.
    center : array_like, optional
        Centre of the working domain; origin by default.
    optimum : array_like, optional
        Known maximizer.
    stochastic : bool
        Whether ``func`` consumes a random generator.
    """

    def __init__(self, dim, func, grad=None, diameter=math.inf, center=None,
                 optimum=None, stochastic=False):
        self.dim = int(dim)
        if self.dim < 1:
            raise DimensionError("objective dimension must be >= 1")
        self._func = func
        self._grad = grad
        self.diameter = float(diameter)
        self.center = np.zeros(self.dim) if center is None else as_param(center, self.dim)
        self.optimum = None if optimum is None else as_param(optimum, self.dim)
        self.stochastic = bool(stochastic)

    @property
    def has_gradient(self) -> bool:
        return self._grad is not None

    @property
    def f_opt(self) -> float | None:
        if self.optimum is None or self.stochastic:
            return None
        return self.evaluate(self.optimum)

    def evaluate(self, theta, rng: np.random.Generator | None = None) -> float:
        theta = as_param(theta, self.dim)
        if self.stochastic:
            if rng is None:
                raise ValueError("stochastic objective needs a random generator")
            value = float(self._func(theta, rng))
        else:
            value = float(self._func(theta))
        if not math.isfinite(value):
            raise EvaluationError(f"objective returned {value} at theta={theta.tolist()}")
        return value

    __call__ = evaluate

    def evaluate_batch(self, thetas, rngs: Sequence[np.random.Generator] | None = None) -> np.ndarray:
        """Evaluate each row of ``thetas``; subclasses may vectorize."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if rngs is None:
            rngs = [None] * len(thetas)
        return np.array([self.evaluate(t, r) for t, r in zip(thetas, rngs)])

    def gradient(self, theta) -> np.ndarray:
        if self._grad is None:
            raise CapabilityError("objective has no gradient")
        return np.asarray(self._grad(as_param(theta, self.dim)), dtype=float)

    def in_domain(self, theta) -> bool:
        if not math.isfinite(self.diameter):
            return True
        return bool(np.linalg.norm(np.asarray(theta) - self.center) <= 0.5 * self.diameter)

    def shifted(self, constant: float) -> "Objective":
        """Same objective plus a constant (used for invariance checks)."""
        base = self
        if self.stochastic:
            func = lambda th, rng: base.evaluate(th, rng) + constant
        else:
            func = lambda th: base.evaluate(th) + constant
        return Objective(self.dim, func, self._grad, self.diameter, self.center,
                         self.optimum, self.stochastic)


class QuadraticConcave(Objective):
    """``f(x) = -1/2 x^T A x + b^T x + offset`` with ``mu I <= A <= rho I``."""

    def __init__(self, A, b, mu, rho, offset=0.0, diameter=math.inf, center=None,
                 check=True):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise DimensionError(f"A must be square, got shape {A.shape}")
        b = as_param(b, d)
        mu, rho = float(mu), float(rho)
        if not 0 < mu < rho:
            raise ValueError(f"need 0 < mu < rho, got mu={mu}, rho={rho}")
        if check:
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
                raise ValueError("A must be symmetric")
            eig = np.linalg.eigvalsh(A)
            tol = 1e-9 * rho
            if eig[0] < mu - tol or eig[-1] > rho + tol:
                raise ValueError(f"eigenvalues {eig.tolist()} fall outside [{mu}, {rho}]")
        self.A = A
        self.b = b
        self.mu = mu
        self.rho = rho
        self.offset = float(offset)
        optimum = np.linalg.solve(A, b)
        super().__init__(d, self._value, self._gradient, diameter, center, optimum)

    def _value(self, x):
        return -0.5 * x @ self.A @ x + self.b @ x + self.offset

    def _gradient(self, x):
        return -self.A @ x + self.b

    def evaluate_batch(self, thetas, rngs=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(thetas, dtype=float))
        vals = -0.5 * np.einsum("ij,jk,ik->i", X, self.A, X) + X @ self.b + self.offset
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("quadratic returned a non-finite value")
        return vals

    def gradient_norm_range(self, center=None, radius=None) -> tuple[float, float]:
        """Bounds on ``||grad f||`` over a ball: (exact infimum, triangle-inequality supremum).

        Defaults to the objective's working domain.
        """
        from scipy.optimize import minimize

        c = self.center if center is None else as_param(center, self.dim)
        r = 0.5 * self.diameter if radius is None else float(radius)
        if not math.isfinite(r):
            raise ValueError("gradient range needs a bounded domain")
        offset = self.A @ (c - self.optimum)
        sup = float(np.linalg.norm(offset) + np.linalg.eigvalsh(self.A)[-1] * r)
        if np.linalg.norm(c - self.optimum) <= r:
            return 0.0, sup
        # min ||A(x - x*)||^2 over the ball, convex
        res = minimize(
            lambda x: float(np.sum((self.A @ (x - self.optimum)) ** 2)),
            x0=c + r * (self.optimum - c) / np.linalg.norm(self.optimum - c),
            jac=lambda x: 2 * self.A @ (self.A @ (x - self.optimum)),
            constraints=[{"type": "ineq", "fun": lambda x: r**2 - np.sum((x - c) ** 2),
                          "jac": lambda x: -2 * (x - c)}],
            method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 500},
        )
        return float(math.sqrt(max(res.fun, 0.0))), sup


def make_quadratic(d: int, mu: float, rho: float, seed: SeedSpec, optimum=None,
                   optimum_radius: float = 1.0, diameter: float = math.inf,
                   center=None) -> QuadraticConcave:
    """Random ``(mu, rho)``-strongly concave quadratic.

    Eigenvalues are uniform in ``[mu, rho]``; for ``d >= 2`` the two endpoints
    are always present so the curvature bounds are tight.  The eigenbasis is a
    Haar-random rotation.  The maximizer is ``optimum`` if given, otherwise a
    uniform draw from the ball of radius ``optimum_radius`` around the origin.
    """
    d = int(d)
    if d < 1:
        raise DimensionError("quadratic dimension must be >= 1")
    mu, rho = float(mu), float(rho)
    if mu <= 0 or mu >= rho:
        raise ValueError(f"need 0 < mu < rho, got mu={mu}, rho={rho}")
    rng = seed.generator()
    if d == 1:
        eig = rng.uniform(mu, rho, size=1)
        Q = np.ones((1, 1))
    else:
        eig = np.concatenate([[mu, rho], rng.uniform(mu, rho, size=d - 2)])
        Q = ortho_group.rvs(d, random_state=rng)
    A = (Q * eig) @ Q.T
    A = 0.5 * (A + A.T)
    if optimum is None:
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        optimum = u * optimum_radius * rng.uniform() ** (1.0 / d)
    optimum = as_param(optimum, d)
    return QuadraticConcave(A, A @ optimum, mu, rho, diameter=diameter, center=center)


def linear_objective(c) -> Objective:
    c = as_param(c)
    return Objective(c.size, lambda th: float(c @ th), lambda th: c.copy())


@dataclass
class ConcavityCheck:
    passed: bool
    n_checked: int
    witness: dict | None = None

    def __bool__(self):
        return self.passed


def verify_strong_concavity(f: Objective, mu: float, rho: float, n_pairs: int,
                            seed: SeedSpec, center=None, radius=None) -> ConcavityCheck:
    """Check both curvature inequalities on random pairs from a ball.

    The ball defaults to the objective's working domain, or the unit ball when
    that is unbounded.  A pair fails when an inequality is violated by more
    than ``1e-8 * (1 + |f(x)|)``; the first failing pair is returned as the
    witness.
    """
    if not f.has_gradient:
        raise CapabilityError("strong concavity check needs a gradient")
    d = f.dim
    c = f.center if center is None else as_param(center, d)
    if radius is None:
        radius = 0.5 * f.diameter if math.isfinite(f.diameter) else 1.0
    rng = seed.generator()

    def ball_point():
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        return c + u * radius * rng.uniform() ** (1.0 / d)

    for k in range(int(n_pairs)):
        x, y = ball_point(), ball_point()
        fx, fy = f.evaluate(x), f.evaluate(y)
        lin = fx + f.gradient(x) @ (y - x)
        sq = float((y - x) @ (y - x))
        tol = 1e-8 * (1.0 + abs(fx))
        upper = lin - 0.5 * mu * sq
        lower = lin - 0.5 * rho * sq
        if fy > upper + tol:
            return ConcavityCheck(False, k + 1, {"x": x, "y": y, "inequality": "upper",
                                                 "f_y": fy, "bound": upper})
        if fy < lower - tol:
            return ConcavityCheck(False, k + 1, {"x": x, "y": y, "inequality": "lower",
                                                 "f_y": fy, "bound": lower})
    return ConcavityCheck(True, int(n_pairs))


# --- noise models -----------------------------------------------------------

@dataclass(frozen=True)
class NoNoise:
    def draw(self, rng):
        return 0.0

    def draw_many(self, n, rng):
        return np.zeros(n)


@dataclass(frozen=True)
class IidGaussian:
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be >= 0")

    def draw(self, rng):
        return float(self.std * rng.standard_normal())

    def draw_many(self, n, rng):
        return self.std * rng.standard_normal(n)


@dataclass(frozen=True)
class BoundedUniform:
    bound: float

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("noise bound must be >= 0")

    def draw(self, rng):
        return float(rng.uniform(-self.bound, self.bound))

    def draw_many(self, n, rng):
        return rng.uniform(-self.bound, self.bound, size=n)


@dataclass(frozen=True)
class Adversarial:
    """At most ``max_corrupt`` evaluations per HC step are corrupted; the rest get
    uniform noise in ``[-bound, bound]``."""

    bound: float
    max_corrupt: int
    policy: str = "target_best"

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("noise bound must be >= 0")
        if self.max_corrupt < 0:
            raise ValueError("max_corrupt must be >= 0")
        if self.policy not in ("target_best", "random_subset"):
            raise ValueError(f"unknown adversary policy {self.policy!r}")

    def draw(self, rng):
        return float(rng.uniform(-self.bound, self.bound))

    def draw_many(self, n, rng):
        return rng.uniform(-self.bound, self.bound, size=n)


def corrupted_value(f: float) -> float:
    """Finite stand-in for an unboundedly negative observation."""
    return f - 1e6 * (1.0 + abs(f))


def noise_from_dict(spec: dict | None):
    if not spec:
        return NoNoise()
    spec = dict(spec)
    kind = spec.pop("type", "none")
    if kind == "none":
        model = NoNoise()
    elif kind == "gaussian":
        model = IidGaussian(float(spec.pop("std")))
    elif kind == "uniform":
        model = BoundedUniform(float(spec.pop("bound")))
    elif kind == "adversarial":
        model = Adversarial(float(spec.pop("bound")), int(spec.pop("max_corrupt")),
                            str(spec.pop("policy", "target_best")))
    else:
        raise ValueError(f"unknown noise type {kind!r}")
    if spec:
        raise ValueError(f"unexpected noise fields {sorted(spec)}")
    return model


def noise_to_dict(model) -> dict:
    if isinstance(model, NoNoise):
        return {"type": "none"}
    if isinstance(model, IidGaussian):
        return {"type": "gaussian", "std": model.std}
    if isinstance(model, BoundedUniform):
        return {"type": "uniform", "bound": model.bound}
    if isinstance(model, Adversarial):
        return {"type": "adversarial", "bound": model.bound,
                "max_corrupt": model.max_corrupt, "policy": model.policy}
    raise TypeError(f"not a noise model: {model!r}")


@dataclass
class StepEvaluation:
    """Noisy evaluations of one HC step, with instrumentation."""

    noisy: np.ndarray
    base: np.ndarray
    true: np.ndarray | None
    corrupted: np.ndarray

    @property
    def eps(self) -> np.ndarray:
        return self.noisy - self.base


class NoisyObjective:
    """An :class:`Objective` observed through additive noise, with an evaluation counter.

    ``budget`` optionally caps the number of evaluations.
    """

    def __init__(self, base: Objective, noise=None, budget: int | None = None):
        self.base = base
        self.noise = NoNoise() if noise is None else noise
        self.budget = budget
        self._count = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def eval_count(self) -> int:
        return self._count

    def _charge(self, n: int):
        with self._lock:
            if self.budget is not None and self._count + n > self.budget:
                raise BudgetExhausted(
                    f"evaluation budget {self.budget} exhausted ({self._count} used, {n} requested)")
            self._count += n

    def evaluate(self, theta, rng) -> float:
        """One noisy evaluation.

        ``rng`` is a :class:`SeedSpec` or a numpy ``Generator``.  Adversarial
        corruption is only applied inside :meth:`evaluate_step`; a lone
        evaluation only receives the bounded part of that model.
        """
        return float(self.evaluate_step(np.atleast_2d(theta), rng, corrupt=False).noisy[0])

    def evaluate_step(self, points, step_seed, corrupt=True) -> StepEvaluation:
        """Evaluate all points of one HC step.

        Evaluation ``j`` of a stochastic base objective runs on the stream
        ``step_seed.child(Role.EVAL, j)``; additive noise for the step is one
        vector drawn from ``step_seed.child(Role.NOISE)`` and indexed by ``j``,
        so results do not depend on evaluation order.  The adversary (if any)
        sees the whole step and corrupts at most ``max_corrupt`` evaluations.
        A numpy ``Generator`` may stand in for ``step_seed``; it is then
        consumed sequentially.
        """
        X = np.atleast_2d(np.asarray(points, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {X.shape[1]}")
        n = len(X)
        self._charge(n)
        seeded = isinstance(step_seed, SeedSpec)
        if self.base.stochastic:
            if seeded:
                rngs = [step_seed.child(Role.EVAL, j).generator() for j in range(n)]
            else:
                rngs = [step_seed] * n
            base = self.base.evaluate_batch(X, rngs)
            true = None
        else:
            base = self.base.evaluate_batch(X)
            true = base.copy()
        if isinstance(self.noise, NoNoise):
            eps = np.zeros(n)
        else:
            eps = self.noise.draw_many(n, step_seed.child(Role.NOISE).generator() if seeded else step_seed)
        noisy = base + eps
        corrupted = np.zeros(n, dtype=bool)
        if corrupt and isinstance(self.noise, Adversarial) and self.noise.max_corrupt > 0:
            w = min(self.noise.max_corrupt, n)
            if self.noise.policy == "target_best":
                idx = np.argsort(-base, kind="stable")[:w]
            else:
                rng = step_seed.child(Role.ADVERSARY).generator() if seeded else step_seed
                idx = rng.choice(n, size=w, replace=False)
            corrupted[idx] = True
            noisy[idx] = [corrupted_value(v) for v in base[idx]]
        return StepEvaluation(noisy, base, true, corrupted)


def evaluate_noisy(obj: NoisyObjective, theta, rng) -> float:
    return obj.evaluate(theta, rng)


# --- task distributions over synthetic objectives ---------------------------

class FixedTask:
    """Degenerate task distribution that always returns the same objective."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.dim = objective.dim

    def sample_objective(self, split: str, seed: SeedSpec) -> Objective:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.objective


@dataclass
class QuadraticTaskFamily:
    """Concave quadratics whose tasks differ by a per-axis gain ("dynamics").

    A task has gain matrix ``G = diag(s_i k_i)`` (magnitude ``k_i`` uniform in
    ``gain_range``, sign ``s_i`` flipped with probability ``flip_prob``) and a
    goal ``c`` uniform in ``[goal_low, goal_high]^dim``.  Its objective is
    ``f(theta) = -1/2 (G theta - c)^T A (G theta - c)`` with maximum 0, where
    ``A`` is a fixed ``(mu, rho)`` instance shared by all tasks.
    """

    dim: int = 2
    mu: float = 1.0
    rho: float = 4.0
    gain_range: tuple[float, float] = (0.5, 1.5)
    flip_prob: float = 0.5
    goal_low: float = -1.0
    goal_high: float = 1.0
    instance_seed: int = 0
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo, hi = self.gain_range
        if not 0 < lo <= hi:
            raise ValueError("gain_range must satisfy 0 < low <= high")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")
        if self.goal_low > self.goal_high:
            raise ValueError("goal_low must be <= goal_high")
        base = make_quadratic(self.dim, self.mu, self.rho, SeedSpec(self.instance_seed, (Role.INSTANCE,)))
        self.A = base.A

    def sample_gains_goal(self, split: str, seed: SeedSpec):
        rng = seed.child(Role.TASK, SPLITS[split]).generator()
        k = rng.uniform(*self.gain_range, size=self.dim)
        s = np.where(rng.uniform(size=self.dim) < self.flip_prob, -1.0, 1.0)
        c = rng.uniform(self.goal_low, self.goal_high, size=self.dim)
        return k * s, c

    def make_task(self, gains, goal) -> QuadraticConcave:
        G = np.diag(np.asarray(gains, dtype=float))
        c = np.asarray(goal, dtype=float)
        H = G @ self.A @ G
        H = 0.5 * (H + H.T)
        eig = np.linalg.eigvalsh(H)
        return QuadraticConcave(H, G @ self.A @ c, eig[0] * (1 - 1e-12), eig[-1] * (1 + 1e-12),
                                offset=-0.5 * c @ self.A @ c, check=False)

    def sample_objective(self, split: str, seed: SeedSpec) -> QuadraticConcave:
        return self.make_task(*self.sample_gains_goal(split, seed))
