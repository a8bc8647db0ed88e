"""Command-line entry point: ``esmaml-hc <kind> --config PATH --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

from .config import KINDS, PRESETS, ConfigValidationError, ExperimentConfig, parse, preset_text
from .experiments import emit_plot_data, run


def _parser():
    p = argparse.ArgumentParser(prog="esmaml-hc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run the {kind} experiment")
        src = s.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON config file")
        src.add_argument("--preset", choices=PRESETS, help="bundled config")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="master seed (overrides seeds.master)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes; does not change results")
    s = sub.add_parser("emit-plots", help="write plot-ready CSVs for a finished run")
    s.add_argument("run_dir", nargs="?", help="run directory")
    s.add_argument("--out", help="run directory (alternative to the positional argument)")
    return p


def _load(args) -> tuple[ExperimentConfig, str | None]:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigValidationError(("config",), str(exc)) from None
    elif args.preset:
        text = preset_text(args.preset)
    else:
        text = json.dumps({"kind": args.command})
    cfg = parse(text)
    data = json.loads(text)
    if isinstance(data, dict) and "kind" in data and data["kind"] != args.command:
        raise ConfigValidationError(("kind",), f"config is for {data['kind']!r}, not {args.command!r}")
    cfg.kind = args.command
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigValidationError(("seeds", "master"), "--seed must be >= 0")
        cfg.seeds.master = args.seed
    if args.out:
        cfg.output_dir = args.out
    return cfg, text


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "emit-plots":
        run_dir = args.run_dir or args.out
        if not run_dir:
            print("error: emit-plots needs a run directory", file=sys.stderr)
            return 2
        try:
            for name in emit_plot_data(run_dir):
                print(os.path.join(run_dir, name))
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        return 0
    try:
        cfg, text = _load(args)
    except ConfigValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return 2
    out = cfg.output_dir
    try:
        if args.jobs == 1:
            manifest = run(cfg, out, map, text)
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                manifest = run(cfg, out, lambda f, *it: pool.map(f, *it, chunksize=1), text)
    except Exception as exc:  # noqa: BLE001 - any runtime failure becomes a failure record
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "failure.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"kind": cfg.kind, "error": type(exc).__name__, "message": str(exc),
                       "traceback": traceback.format_exc()}, fh, indent=2)
            fh.write("\n")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    for name in manifest["outputs"]:
        print(os.path.join(out, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
