"""Experiment configuration: a JSON tree of typed sections with defaults.

Every section is a dataclass.  Parsing fills in defaults, so
``dumps(parse(text))`` is a fixed point of ``parse -> dumps``.  Validation
errors name the offending key and, when the key appears in the source text,
its line number.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from importlib import resources

from ..adaptation import VARIANTS, AdaptationConfig
from ..environments import TaskDistribution
from ..objectives import QuadraticTaskFamily, noise_from_dict, noise_to_dict
from ..theory import L_MODES

KINDS = ("train", "adapt", "compare-hc", "regret", "bound")
TASK_TYPES = ("nav2d", "quadratic_family")
PRESETS = ("nav2d-noisy", "theorem-quadratic")


class ConfigValidationError(ValueError):
    def __init__(self, path, message, line=None):
        self.path = tuple(path)
        self.line = line
        self.message = message
        where = ".".join(str(p) for p in self.path) or "<root>"
        loc = f"line {line}: " if line is not None else ""
        super().__init__(f"{loc}{where}: {message}")


@dataclass
class Seeds:
    master: int = 0
    runs: int = 10


@dataclass
class AdaptationSection:
    variant: str = "batch"
    alpha: float = 0.05
    Q: int = 5
    P: int = 10
    normalize_directions: bool = True

    def build(self) -> AdaptationConfig:
        return AdaptationConfig(self.variant, self.alpha, self.Q, self.P, self.normalize_directions)


@dataclass
class MetaSection:
    sigma: float = 0.1
    beta: float = 0.01
    n: int = 10
    iterations: int = 100
    normalize_outer: bool = False
    eval_rollouts: int = 1
    init: list | None = None
    inner: AdaptationSection = field(default_factory=AdaptationSection)
    baseline: bool = True
    eval_every: int = 10


@dataclass
class EvaluationSection:
    n_tasks: int = 20
    seeds_per_task: int = 1
    eval_rollouts: int = 50
    policy: object = "zeros"


@dataclass
class CompareSection:
    variants: list = field(default_factory=lambda: ["batch", "average"])
    P_values: list = field(default_factory=lambda: [1, 2, 5, 10, 20])
    budget: int = 50
    n_tasks: int = 30
    seeds_per_task: int = 10
    eval_rollouts: int = 50
    alpha: float = 0.1
    normalize_directions: bool = True
    policy: object = "zeros"


@dataclass
class TheoremSection:
    d: int = 2
    mu: float = 1.0
    rho: float = 4.0
    xi: float = 0.5
    s: float = 1.0
    phi0: float | None = None
    Lambda: float = 0.0
    W: int = 0
    D: float | None = None
    L: float | None = None
    T: int = 100
    T_grid: list = field(default_factory=lambda: [16, 64, 256, 1024])
    P: int = 16
    start_distance: float = 1.0
    L_mode: str = "start"


@dataclass
class ExperimentConfig:
    kind: str = "adapt"
    task: dict = field(default_factory=lambda: {"type": "nav2d"})
    noise: dict = field(default_factory=lambda: {"type": "none"})
    adaptation: AdaptationSection = field(default_factory=AdaptationSection)
    meta: MetaSection = field(default_factory=MetaSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    compare: CompareSection = field(default_factory=CompareSection)
    theorem: TheoremSection = field(default_factory=TheoremSection)
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str = "runs/out"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --- task and noise construction --------------------------------------------

def _task_defaults(kind: str) -> dict:
    cls = {"nav2d": TaskDistribution, "quadratic_family": QuadraticTaskFamily}[kind]
    out = {"type": kind}
    for f in dataclasses.fields(cls):
        if f.init:
            v = f.default
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def build_task(spec: dict):
    spec = dict(spec)
    kind = spec.pop("type")
    if kind == "nav2d":
        tuples = {"goal_low", "goal_high", "gain_range", "drift_low", "drift_high"}
        return TaskDistribution(**{k: tuple(v) if k in tuples else v for k, v in spec.items()})
    return QuadraticTaskFamily(**{k: tuple(v) if k == "gain_range" else v for k, v in spec.items()})


def build_noise(spec: dict):
    return noise_from_dict(spec)


# --- parsing ----------------------------------------------------------------

def _key_line(text: str | None, path) -> int | None:
    """Best-effort line of the last key of ``path`` in the JSON source."""
    if not text:
        return None
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _coerce(value, default, path, text):
    def bad(msg):
        raise ConfigValidationError(path, msg, _key_line(text, path))

    if isinstance(default, bool):
        if not isinstance(value, bool):
            bad(f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            bad(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        bad(f"expected a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        bad(f"expected a list, got {value!r}")
    return value


def _build(cls, data, path, text):
    if not isinstance(data, dict):
        raise ConfigValidationError(path, f"expected an object, got {type(data).__name__}",
                                    _key_line(text, path))
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigValidationError(path + (key,), "unknown key", _key_line(text, path + (key,)))
    obj = cls()
    for name, f in names.items():
        if name not in data:
            continue
        value, sub = data[name], path + (name,)
        current = getattr(obj, name)
        if dataclasses.is_dataclass(current):
            value = _build(type(current), value, sub, text)
        elif current is not None and not isinstance(current, dict) and f.type != "object":
            value = _coerce(value, current, sub, text)
        elif f.type == "float | None" and value is not None:
            value = _coerce(value, 0.0, sub, text)
        elif f.type == "list | None" and value is not None:
            value = _coerce(value, [], sub, text)
        setattr(obj, name, value)
    return obj


def _check(cond, path, msg, text):
    if not cond:
        raise ConfigValidationError(path, msg, _key_line(text, path))


def _validate_policy(policy, path, text):
    ok = policy in ("zeros", "train") or (
        isinstance(policy, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                         for v in policy))
    _check(ok, path, "policy must be 'zeros', 'train' or a list of numbers", text)


def validate(cfg: ExperimentConfig, text: str | None = None) -> ExperimentConfig:
    """Check every module precondition up front; fills task/noise defaults."""
    _check(cfg.kind in KINDS, ("kind",), f"must be one of {KINDS}", text)
    _check(isinstance(cfg.task, dict) and cfg.task.get("type") in TASK_TYPES, ("task", "type"),
           f"must be one of {TASK_TYPES}", text)
    full = _task_defaults(cfg.task["type"])
    for k, v in cfg.task.items():
        _check(k in full, ("task", k), "unknown key", text)
        full[k] = v
    try:
        build_task(full)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(("task",), str(exc), _key_line(text, ("task",))) from None
    cfg.task = full
    try:
        cfg.noise = noise_to_dict(build_noise(cfg.noise))
    except KeyError as exc:
        raise ConfigValidationError(("noise",), f"missing noise field {exc}",
                                    _key_line(text, ("noise",))) from None
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(("noise",), f"invalid noise model: {exc}",
                                    _key_line(text, ("noise",))) from None
    for path, sec in ((("adaptation",), cfg.adaptation), (("meta", "inner"), cfg.meta.inner)):
        try:
            sec.build()
        except ValueError as exc:
            raise ConfigValidationError(path, str(exc), _key_line(text, path)) from None
    m = cfg.meta
    _check(m.sigma > 0, ("meta", "sigma"), "must be > 0", text)
    _check(m.beta >= 0, ("meta", "beta"), "must be >= 0", text)
    _check(m.n >= 1, ("meta", "n"), "must be >= 1", text)
    _check(m.iterations >= 0, ("meta", "iterations"), "must be >= 0", text)
    _check(m.eval_rollouts >= 1, ("meta", "eval_rollouts"), "must be >= 1", text)
    _check(m.eval_every >= 1, ("meta", "eval_every"), "must be >= 1", text)
    if m.init is not None:
        _validate_policy(m.init, ("meta", "init"), text)
        _check(isinstance(m.init, list), ("meta", "init"), "must be a list of numbers", text)
    e = cfg.evaluation
    _check(e.n_tasks >= 1, ("evaluation", "n_tasks"), "must be >= 1", text)
    _check(e.seeds_per_task >= 1, ("evaluation", "seeds_per_task"), "must be >= 1", text)
    _check(e.eval_rollouts >= 1, ("evaluation", "eval_rollouts"), "must be >= 1", text)
    _validate_policy(e.policy, ("evaluation", "policy"), text)
    c = cfg.compare
    _check(len(c.variants) > 0 and all(v in VARIANTS for v in c.variants), ("compare", "variants"),
           f"entries must be in {VARIANTS}", text)
    _check(len(c.P_values) > 0 and all(isinstance(p, int) and p >= 1 for p in c.P_values),
           ("compare", "P_values"), "entries must be integers >= 1", text)
    _check(c.budget >= 1, ("compare", "budget"), "must be >= 1", text)
    _check(c.n_tasks >= 1, ("compare", "n_tasks"), "must be >= 1", text)
    _check(c.seeds_per_task >= 1, ("compare", "seeds_per_task"), "must be >= 1", text)
    _check(c.eval_rollouts >= 1, ("compare", "eval_rollouts"), "must be >= 1", text)
    _check(c.alpha > 0, ("compare", "alpha"), "must be > 0", text)
    _validate_policy(c.policy, ("compare", "policy"), text)
    t = cfg.theorem
    _check(t.d >= 1, ("theorem", "d"), "must be >= 1", text)
    _check(0 < t.mu < t.rho, ("theorem", "mu"), "need 0 < mu < rho", text)
    _check(0 < t.xi < 1, ("theorem", "xi"), "need 0 < xi < 1", text)
    _check(t.s > 0, ("theorem", "s"), "must be > 0", text)
    _check(t.Lambda >= 0, ("theorem", "Lambda"), "must be >= 0", text)
    _check(t.W >= 0, ("theorem", "W"), "must be >= 0", text)
    _check(t.T >= 1, ("theorem", "T"), "must be >= 1", text)
    _check(len(t.T_grid) > 0 and all(isinstance(v, int) and v >= 1 for v in t.T_grid),
           ("theorem", "T_grid"), "entries must be integers >= 1", text)
    _check(t.P >= 1, ("theorem", "P"), "must be >= 1", text)
    _check(t.start_distance > 0, ("theorem", "start_distance"), "must be > 0", text)
    _check(t.L_mode in L_MODES, ("theorem", "L_mode"), f"must be one of {L_MODES}", text)
    _check(t.L is None or t.L > 0, ("theorem", "L"), "must be > 0", text)
    _check(t.D is None or t.D >= 0, ("theorem", "D"), "must be >= 0", text)
    if cfg.kind == "bound":
        _check(t.L is not None, ("theorem", "L"), "required for kind 'bound'", text)
        _check(t.D is not None, ("theorem", "D"), "required for kind 'bound'", text)
    if cfg.kind == "regret":
        noise = build_noise(cfg.noise)
        W = getattr(noise, "max_corrupt", 0)
        _check(W < t.P, ("theorem", "P"), f"batch size must exceed max_corrupt={W}", text)
    _check(cfg.seeds.master >= 0, ("seeds", "master"), "must be >= 0", text)
    _check(cfg.seeds.runs >= 1, ("seeds", "runs"), "must be >= 1", text)
    _check(isinstance(cfg.output_dir, str) and cfg.output_dir, ("output_dir",), "must be a path", text)
    return cfg


def parse(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError((), f"invalid JSON: {exc.msg}", exc.lineno) from None
    return validate(_build(ExperimentConfig, data, (), text), text)


def from_dict(data: dict) -> ExperimentConfig:
    return parse(json.dumps(data))


def load(path) -> tuple[ExperimentConfig, str]:
    """Parse a config file; returns the config and the verbatim source text."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse(text), text


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigValidationError(("preset",), f"unknown preset {name!r}; choose from {PRESETS}")
    return resources.files(__package__).joinpath("presets", f"{name}.json").read_text(encoding="utf-8")


def load_preset(name: str) -> ExperimentConfig:
    return parse(preset_text(name))
