"""Experiment runners behind the CLI.

Each runner takes a validated :class:`ExperimentConfig`, an output directory
and a ``map_fn`` (builtin ``map`` or a process-pool map), writes its CSVs and
returns a dict of budget totals for the manifest.  Work is split into jobs
whose random streams depend only on the master seed and the job's indices,
so the output does not depend on ``map_fn``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from datetime import datetime, timezone

import numpy as np
from scipy import stats

from ..adaptation import AdaptationConfig, adapt_with_trace, TRACE_COLUMNS
from ..core import Role, SeedSpec
from ..meta import META_TRACE_COLUMNS, MetaConfig, es_maml_train, evaluate_adaptation, train_dr_baseline
from ..objectives import NoisyObjective
from ..theory import (
    HypothesisError,
    TheoremParams,
    regret_bound,
    regret_experiment,
    required_batch_log,
    sigma_schedule,
    min_L_threshold,
    success_probability,
)
from .config import ExperimentConfig, build_noise, build_task

# top-level stream roles of the harness, disjoint from the module-level Role tags
_TRAIN, _DR, _EVAL, _COMPARE, _ADAPT, _REGRET = 101, 102, 103, 104, 105, 106


def fmt(v) -> str:
    """CSV cell: shortest round-trip repr for floats, plain text otherwise."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) for h in header])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.dumps().encode("utf-8")).hexdigest()


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def meta_config(cfg: ExperimentConfig) -> MetaConfig:
    m = cfg.meta
    return MetaConfig(m.sigma, m.beta, m.n, m.iterations, m.inner.build(), m.normalize_outer,
                      m.eval_rollouts, build_noise(cfg.noise))


def _init(cfg, dist):
    if cfg.meta.init is None:
        return np.zeros(dist.dim)
    return np.asarray(cfg.meta.init, dtype=float)


def resolve_policy(cfg: ExperimentConfig, policy, dist, map_fn):
    """Meta policy for evaluation: zeros, an explicit vector, or ES-MAML training."""
    if isinstance(policy, list):
        return np.asarray(policy, dtype=float)
    if policy == "zeros":
        return np.zeros(dist.dim)
    theta, _ = es_maml_train(_init(cfg, dist), dist, meta_config(cfg),
                             SeedSpec(cfg.seeds.master, (_TRAIN,)), map_fn)
    return theta


# --- bound ------------------------------------------------------------------

BOUND_COLUMNS = ["T", "D", "L", "bound", "sigma", "min_L", "log_P_excess", "P_min",
                 "P_overflow", "success_probability"]


def run_bound(cfg: ExperimentConfig, out, map_fn=map) -> dict:
    t = cfg.theorem
    rows = []
    for T in sorted({int(t.T), *map(int, t.T_grid)}):
        try:
            min_L = min_L_threshold(t.Lambda, T, t.xi, t.rho, t.mu)
        except HypothesisError:
            min_L = None
        req = required_batch_log(t.W, t.s, t.d, T)
        rows.append({"T": T, "D": float(t.D), "L": float(t.L), "bound": regret_bound(t.D, t.L, T),
                     "sigma": sigma_schedule(t.xi, t.L, T, t.d), "min_L": min_L,
                     "log_P_excess": req.log_excess, "P_min": req.p_min,
                     "P_overflow": req.overflow, "success_probability": success_probability(T, t.s)})
    write_csv(os.path.join(out, "bound.csv"), BOUND_COLUMNS, rows)
    return {"evaluations": 0}


# --- regret -----------------------------------------------------------------

REGRET_COLUMNS = ["T", "run", "final_regret", "avg_regret", "bound", "slope"]
REGRET_RUN_COLUMNS = ["T", "run", "final_regret", "avg_regret", "bound", "evals", "corrupted"]


def run_regret(cfg: ExperimentConfig, out, map_fn=map) -> dict:
    t = cfg.theorem
    params = TheoremParams(d=t.d, T=t.T, mu=t.mu, rho=t.rho, L=t.L, Lambda=t.Lambda, W=t.W, xi=t.xi, s=t.s)
    res = regret_experiment(params, t.P, cfg.seeds.runs, SeedSpec(cfg.seeds.master, (_REGRET,)),
                            T_grid=t.T_grid, noise=build_noise(cfg.noise),
                            start_distance=t.start_distance, L_mode=t.L_mode, map_fn=map_fn)
    runs = [vars(r) for r in res.rows]
    write_csv(os.path.join(out, "regret_runs.csv"), REGRET_RUN_COLUMNS, runs)
    summary = [{"T": T, "run": cfg.seeds.runs, "final_regret": fr, "avg_regret": ar, "bound": b,
                "slope": res.slope}
               for T, fr, ar, b in zip(res.T_grid, res.mean_final_regret, res.mean_avg_regret, res.bounds)]
    write_csv(os.path.join(out, "regret.csv"), REGRET_COLUMNS, summary)
    s = res.setup
    setup = [{"quantity": k, "value": v} for k, v in
             (("D", s.D), ("L", s.L), ("L_inf", s.L_inf), ("L_sup", s.L_sup), ("L_start", s.L_start),
              ("f_opt", s.objective.f_opt))]
    write_csv(os.path.join(out, "regret_setup.csv"), ["quantity", "value"], setup)
    return {"evaluations": int(sum(r["evals"] for r in runs)),
            "corrupted": int(sum(r["corrupted"] for r in runs))}


# --- adapt ------------------------------------------------------------------

ADAPT_COLUMNS = ["task", "seed", "meta_value", "adapted_value", "gap", "evals"]


def _adapt_job(args):
    dist, theta, U, noise, rollouts, master, task, n_seeds = args
    obj = dist.sample_objective("test", SeedSpec(master, (_EVAL, task)))
    rows, traces = [], []
    for s in range(n_seeds):
        seed = SeedSpec(master, (_ADAPT, task, s))
        res = evaluate_adaptation(theta, obj, U, rollouts, seed, noise)
        rows.append({"task": task, "seed": s, "meta_value": res.meta_value,
                     "adapted_value": res.adapted_value, "gap": res.gap, "evals": res.evals})
        # replays the adaptation stream used above
        _, trace = adapt_with_trace(theta, NoisyObjective(obj, noise), U, seed.child(Role.ADAPT))
        for r in trace.rows():
            traces.append({"task": task, "seed": s, **r})
    return rows, traces


def run_adapt(cfg: ExperimentConfig, out, map_fn=map) -> dict:
    dist = build_task(cfg.task)
    e = cfg.evaluation
    theta = resolve_policy(cfg, e.policy, dist, map_fn)
    jobs = [(dist, theta, cfg.adaptation.build(), build_noise(cfg.noise), e.eval_rollouts,
             cfg.seeds.master, task, e.seeds_per_task) for task in range(e.n_tasks)]
    rows, traces = [], []
    for r, tr in map_fn(_adapt_job, jobs):
        rows += r
        traces += tr
    write_csv(os.path.join(out, "adapt.csv"), ADAPT_COLUMNS, rows)
    write_csv(os.path.join(out, "traces.csv"), ["task", "seed"] + TRACE_COLUMNS, traces)
    return {"evaluations": int(sum(r["evals"] for r in rows))}


# --- compare-hc ---------------------------------------------------------------

COMPARE_RAW_COLUMNS = ["variant", "P", "Q", "budget", "task", "seed", "meta_value", "adapted_value", "gap"]
COMPARE_SUMMARY_COLUMNS = ["variant", "P", "Q", "budget", "n_tasks", "n_rows", "mean_meta",
                           "mean_adapted", "mean_gap", "std_gap", "std_task_gap", "ci_low", "ci_high"]
COMPARE_TEST_COLUMNS = ["hypothesis", "P_a", "P_b", "variant_a", "variant_b", "mean_diff",
                        "t_stat", "p_value", "n_tasks"]


def _compare_job(args):
    dist, theta, U, noise, rollouts, master, task, n_seeds = args
    obj = dist.sample_objective("test", SeedSpec(master, (_EVAL, task)))
    rows = []
    for s in range(n_seeds):
        # the adaptation stream is shared by all (variant, P) settings of a task and seed
        res = evaluate_adaptation(theta, obj, U, rollouts, SeedSpec(master, (_COMPARE, task, s)), noise)
        rows.append({"variant": U.variant, "P": U.P, "Q": U.Q, "budget": res.evals, "task": task,
                     "seed": s, "meta_value": res.meta_value, "adapted_value": res.adapted_value,
                     "gap": res.gap})
    return rows


def compare_settings(cfg: ExperimentConfig) -> list[AdaptationConfig]:
    c = cfg.compare
    out = []
    for variant in c.variants:
        for P in (c.P_values if variant != "sequential" else [1]):
            out.append(AdaptationConfig.for_budget(variant, P, c.budget, alpha=c.alpha,
                                                   normalize_directions=c.normalize_directions))
    return out


def summarize_compare(raw: list[dict]) -> list[dict]:
    """Summary rows recomputed from raw rows only."""
    groups = {}
    for r in raw:
        groups.setdefault((r["variant"], int(r["P"])), []).append(r)
    out = []
    for (variant, P), rows in groups.items():
        gap = np.array([float(r["gap"]) for r in rows])
        meta = np.array([float(r["meta_value"]) for r in rows])
        adapted = np.array([float(r["adapted_value"]) for r in rows])
        tasks = sorted({int(r["task"]) for r in rows})
        per_task = np.array([np.mean([float(r["gap"]) for r in rows if int(r["task"]) == t]) for t in tasks])
        n = len(per_task)
        sd_task = float(np.std(per_task, ddof=1)) if n > 1 else 0.0
        half = float(stats.t.ppf(0.975, n - 1) * sd_task / math.sqrt(n)) if n > 1 else 0.0
        mean_gap = float(np.mean(gap))
        out.append({"variant": variant, "P": P, "Q": int(rows[0]["Q"]),
                    "budget": int(sum(int(r["budget"]) for r in rows)), "n_tasks": n, "n_rows": len(rows),
                    "mean_meta": float(np.mean(meta)), "mean_adapted": float(np.mean(adapted)),
                    "mean_gap": mean_gap, "std_gap": float(np.std(gap)), "std_task_gap": sd_task,
                    "ci_low": mean_gap - half, "ci_high": mean_gap + half})
    return out


def _task_means(raw, variant, P):
    rows = [r for r in raw if r["variant"] == variant and int(r["P"]) == P]
    tasks = sorted({int(r["task"]) for r in rows})
    return tasks, np.array([np.mean([float(r["gap"]) for r in rows if int(r["task"]) == t]) for t in tasks])


def paired_test(raw, a: tuple, b: tuple) -> dict:
    """One-sided paired t-test over per-task mean gaps: H1 mean(a) > mean(b)."""
    ta, xa = _task_means(raw, *a)
    tb, xb = _task_means(raw, *b)
    if ta != tb:
        raise ValueError("settings were run on different tasks")
    diff = xa - xb
    if len(diff) > 1 and np.std(diff) > 0:
        res = stats.ttest_rel(xa, xb, alternative="greater")
        t_stat, p = float(res.statistic), float(res.pvalue)
    else:
        t_stat, p = float("nan"), float("nan")
    return {"hypothesis": f"{a[0]}(P={a[1]}) > {b[0]}(P={b[1]})", "P_a": a[1], "P_b": b[1],
            "variant_a": a[0], "variant_b": b[0], "mean_diff": float(np.mean(diff)),
            "t_stat": t_stat, "p_value": p, "n_tasks": len(diff)}


def compare_tests(raw, variants, P_values) -> list[dict]:
    out = []
    Ps = sorted(set(P_values))
    if "batch" in variants and "average" in variants:
        out += [paired_test(raw, ("batch", P), ("average", P)) for P in Ps]
    if "batch" in variants:
        out += [paired_test(raw, ("batch", hi), ("batch", lo)) for i, hi in enumerate(Ps) for lo in Ps[:i]]
    return out


def run_compare(cfg: ExperimentConfig, out, map_fn=map) -> dict:
    dist = build_task(cfg.task)
    c = cfg.compare
    theta = resolve_policy(cfg, c.policy, dist, map_fn)
    noise = build_noise(cfg.noise)
    jobs = [(dist, theta, U, noise, c.eval_rollouts, cfg.seeds.master, task, c.seeds_per_task)
            for U in compare_settings(cfg) for task in range(c.n_tasks)]
    raw = [r for rows in map_fn(_compare_job, jobs) for r in rows]
    write_csv(os.path.join(out, "compare_raw.csv"), COMPARE_RAW_COLUMNS, raw)
    write_csv(os.path.join(out, "compare_summary.csv"), COMPARE_SUMMARY_COLUMNS, summarize_compare(raw))
    write_csv(os.path.join(out, "compare_tests.csv"), COMPARE_TEST_COLUMNS,
              compare_tests(raw, c.variants, c.P_values))
    return {"evaluations": int(sum(r["budget"] for r in raw))}


# --- train --------------------------------------------------------------------

TRAIN_CURVE_COLUMNS = ["policy", "iteration", "task", "meta_value", "adapted_value", "gap"]
EVAL_COLUMNS = ["policy", "task", "meta_value", "adapted_value", "gap"]


def _eval_job(args):
    dist, theta, U, noise, rollouts, master, task = args
    obj = dist.sample_objective("test", SeedSpec(master, (_EVAL, task)))
    return evaluate_adaptation(theta, obj, U, rollouts, SeedSpec(master, (_ADAPT, task)), noise)


def held_out_eval(cfg, dist, theta, U, map_fn):
    e = cfg.evaluation
    jobs = [(dist, theta, U, build_noise(cfg.noise), e.eval_rollouts, cfg.seeds.master, t)
            for t in range(e.n_tasks)]
    return list(map_fn(_eval_job, jobs))


def run_train(cfg: ExperimentConfig, out, map_fn=map) -> dict:
    dist = build_task(cfg.task)
    mc = meta_config(cfg)
    U = cfg.adaptation.build()
    init = _init(cfg, dist)
    policies = [("es_maml", es_maml_train, _TRAIN)]
    if cfg.meta.baseline:
        policies.append(("dr", train_dr_baseline, _DR))
    curve, evals, thetas, trace_rows, budget = [], [], [], [], {}
    for name, trainer, role in policies:
        snapshots = {0: init.copy()}

        def keep(k, theta, snapshots=snapshots):
            if (k + 1) % cfg.meta.eval_every == 0 or k + 1 == cfg.meta.iterations:
                snapshots[k + 1] = theta.copy()

        theta, trace = trainer(init, dist, mc, SeedSpec(cfg.seeds.master, (role,)), map_fn, keep)
        budget[f"{name}_training"] = trace.total_budget
        for r in trace.rows():
            trace_rows.append({"policy": name, **r})
        for it, snap in sorted(snapshots.items()):
            # DR is evaluated as deployed, without adaptation
            U_eval = U if name == "es_maml" else U.with_Q(0)
            for task, res in enumerate(held_out_eval(cfg, dist, snap, U_eval, map_fn)):
                curve.append({"policy": name, "iteration": it, "task": task, "meta_value": res.meta_value,
                              "adapted_value": res.adapted_value, "gap": res.gap})
        final = [c for c in curve if c["policy"] == name and c["iteration"] == max(snapshots)]
        evals += [{k: c[k] for k in EVAL_COLUMNS} for c in final]
        thetas += [{"policy": name, "index": i, "value": float(v)} for i, v in enumerate(theta)]
    write_csv(os.path.join(out, "meta_trace.csv"), ["policy"] + META_TRACE_COLUMNS, trace_rows)
    write_csv(os.path.join(out, "theta.csv"), ["policy", "index", "value"], thetas)
    write_csv(os.path.join(out, "train_curve.csv"), TRAIN_CURVE_COLUMNS, curve)
    write_csv(os.path.join(out, "eval.csv"), EVAL_COLUMNS, evals)
    budget["evaluations"] = int(sum(v for v in budget.values()))
    return budget


RUNNERS = {"bound": run_bound, "regret": run_regret, "adapt": run_adapt,
           "compare-hc": run_compare, "train": run_train}


def run(cfg: ExperimentConfig, out=None, map_fn=map, source_text: str | None = None) -> dict:
    """Execute ``cfg``; writes outputs, the config copy and ``manifest.json``."""
    out = out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(source_text if source_text is not None else cfg.dumps())
    started = now()
    budget = RUNNERS[cfg.kind](cfg, out, map_fn)
    outputs = sorted(f for f in os.listdir(out) if f.endswith(".csv") or f == "config.json")
    manifest = {"kind": cfg.kind, "config_hash": config_hash(cfg), "started": started,
                "finished": now(), "budget": budget, "outputs": outputs}
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# --- plot data ----------------------------------------------------------------

def _band_rows(groups, keys):
    rows = []
    for key, vals in groups.items():
        v = np.asarray(vals, dtype=float)
        mean, std = float(np.mean(v)), float(np.std(v))
        rows.append({**dict(zip(keys, key)), "mean": mean, "std": std,
                     "band_low": mean - std, "band_high": mean + std, "n": len(v)})
    return rows


def emit_plot_data(run_dir) -> list[str]:
    """Write long-format plot CSVs next to the run's outputs.

    Raises ``FileNotFoundError`` (writing nothing) if the directory holds no
    recognized outputs.
    """
    if not os.path.isdir(run_dir):
        raise FileNotFoundError(f"not a directory: {run_dir}")
    files = {}
    p = os.path.join(run_dir, "regret_runs.csv")
    if os.path.exists(p):
        rows = read_csv(p)
        files["plot_regret.csv"] = (["T", "run", "avg_regret", "bound"], rows)
    p = os.path.join(run_dir, "compare_raw.csv")
    if os.path.exists(p):
        groups = {}
        for r in read_csv(p):
            groups.setdefault((r["variant"], int(r["P"])), []).append(float(r["gap"]))
        files["plot_gap_vs_p.csv"] = (["variant", "P", "mean", "std", "band_low", "band_high", "n"],
                                      _band_rows(groups, ["variant", "P"]))
    p = os.path.join(run_dir, "train_curve.csv")
    if os.path.exists(p):
        groups = {}
        for r in read_csv(p):
            groups.setdefault((r["policy"], int(r["iteration"])), []).append(float(r["adapted_value"]))
        files["plot_training.csv"] = (["policy", "iteration", "mean", "std", "band_low", "band_high", "n"],
                                      _band_rows(groups, ["policy", "iteration"]))
    if not files:
        raise FileNotFoundError(f"no run outputs found in {run_dir}")
    for name, (header, rows) in files.items():
        write_csv(os.path.join(run_dir, name), header, [{h: r[h] for h in header} for r in rows])
    return sorted(files)
