"""Command-line surface: run / verify / lowerbound / ftl.

Flags mirror the config-file fields (TOML or JSON, auto-detected); an
explicitly given flag wins over the file.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import fields

from .generators import GENERATORS, ExperimentConfig
from .harness import run_ftl_baseline, run_online, verify_invariants, write_csv, write_summary
from .metric import MetricError


def _load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        return tomllib.loads(raw.decode())
    if path.endswith(".json"):
        return json.loads(raw)
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return tomllib.loads(raw.decode())


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--generator", choices=GENERATORS)
    p.add_argument("--k", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--points-per-round", dest="points_per_round", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rounding", choices=["det", "rand", "both"])
    p.add_argument("--simplex-only", dest="simplex_only", action=argparse.BooleanOptionalAction)
    p.add_argument("--heuristic-threshold", dest="heuristic_threshold", action=argparse.BooleanOptionalAction)
    p.add_argument("--pad", dest="pad", action=argparse.BooleanOptionalAction)
    p.add_argument("--benchmark", choices=["exact", "local_search"])
    p.add_argument("--out", dest="output_path")
    p.add_argument("--n-points", dest="n_points", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--lam", type=int)
    p.add_argument("--T0", dest="T0", type=int)
    p.add_argument("--drift", type=float)
    p.add_argument("--disc-radius", dest="disc_radius", type=float)
    p.add_argument("--origin-round", dest="origin_round", type=int)
    p.add_argument("--theta-reps", dest="theta_reps", type=int)
    p.add_argument("--input", dest="input_path")


def _build_config(args: argparse.Namespace, overrides: dict | None = None) -> ExperimentConfig:
    values: dict = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise MetricError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if overrides:
        values.update(overrides)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _emit(cfg: ExperimentConfig, records, summary) -> None:
    if cfg.output_path:
        out_dir = os.path.dirname(cfg.output_path)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        write_csv(cfg.output_path, records)
        base, _ = os.path.splitext(cfg.output_path)
        write_summary(base + ".summary.json", summary)
        print(f"wrote {cfg.output_path} ({len(records)} rounds)")
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    records, summary, _ = run_online(cfg)
    _emit(cfg, records, summary)
    return 0


def _cmd_verify(args) -> int:
    report = verify_invariants(seed=args.seed, suite=args.suite)
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    return 0 if report["all_passed"] else 1


def _cmd_lowerbound(args) -> int:
    which = args.which
    overrides = {"generator": f"lb_{which}"}
    if which == "additive":
        k = args.k if args.k is not None else ExperimentConfig().k
        overrides["T"] = k - 1
    if which in ("det", "ftl"):
        overrides["rounding"] = "det"
    if which == "ftl":
        overrides.update({"k": 1, "T": 1})  # T is derived from lam/T0
        cfg = _build_config(args, overrides)
        records, summary = run_ftl_baseline(cfg, adversarial_factor=4.0)
    else:
        cfg = _build_config(args, overrides)
        records, summary, _ = run_online(cfg)
    _emit(cfg, records, summary)
    return 0


def _cmd_ftl(args) -> int:
    cfg = _build_config(args)
    records, summary = run_ftl_baseline(
        cfg, adversarial_factor=args.adversarial_factor
    )
    _emit(cfg, records, summary)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="olkm",
        description="Online k-median learning: mirror descent, rounding, "
        "experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the online pipeline on a generator")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the invariant battery")
    p_verify.add_argument("--suite", default="all")
    p_verify.add_argument("--seed", type=int, default=7)
    p_verify.set_defaults(func=_cmd_verify)

    p_lb = sub.add_parser("lowerbound", help="run an adversarial construction")
    p_lb.add_argument("--which", choices=["det", "rand", "additive", "ftl"], required=True)
    _add_run_flags(p_lb)
    p_lb.set_defaults(func=_cmd_lowerbound)

    p_ftl = sub.add_parser("ftl", help="follow-the-leader baseline")
    _add_run_flags(p_ftl)
    p_ftl.add_argument("--adversarial-factor", type=float, default=None)
    p_ftl.set_defaults(func=_cmd_ftl)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
