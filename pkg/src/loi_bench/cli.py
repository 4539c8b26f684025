"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data/validation error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .allocation import allocate, write_allocation
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, LoIBenchError, ValidationError
from .evaluation import build_fixed_bobs, fixed_bobs_eval
from .loi import estimate_loi
from .pipeline import (
    RunManifest, anova_rows, dump_json, open_manifest, parse_method, read_rows, run_all, training_config,
    ttest_rows, write_dicts, write_report,
)
from .policy import load_pool
from .seeding import derive_seed
from .trainer import train


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=d(None), help="root seed (overrides the config)")
    parser.add_argument("--out", type=Path, default=d(None), help="output directory (overrides output_dir)")
    parser.add_argument("--jobs", type=int, default=d(None), help="worker processes for independent cells")
    parser.add_argument("--scale", default=d(None), help="full-to-desk step scale, e.g. 1/100")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loi-bench", description="LoI estimation, allocation and evaluation")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train SP or PP checkpoint pools")
    p.add_argument("--scenario", required=True)
    p.add_argument("--environment")
    p.add_argument("--method", default="sp", help="sp, pp3, pp5 or pp:<p>")
    p.add_argument("--steps", type=int, help="desk-scale steps per population (default: scaled LoI budget)")
    p.add_argument("--save-interval", type=int)

    p = sub.add_parser("loi", parents=[common], help="estimate LoI from checkpoint pools")
    p.add_argument("--scenario", required=True)
    p.add_argument("--environment")
    p.add_argument("--alice", nargs="+", required=True, type=Path)
    p.add_argument("--bob", nargs="+", required=True, type=Path)
    for name in ("m", "n", "g"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--output", type=Path)

    p = sub.add_parser("allocate", parents=[common], help="allocate budgets from LoI files")
    p.add_argument("--loi", nargs="+", required=True, type=Path)
    p.add_argument("--base-unit", type=int, help="steps per unit (default: scaled config base_unit)")

    p = sub.add_parser("evaluate", parents=[common], help="Fixed-Bobs cross-play evaluation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--environment")
    p.add_argument("--candidates", nargs="+", required=True, metavar="METHOD=DIR[,DIR]",
                   help="pool directories (or training output directories) per method")
    p.add_argument("--bobs", required=True, type=Path, help="SP pool directory to draw Fixed-Bobs from")
    p.add_argument("--games", type=int)
    p.add_argument("--reference", default="sp")

    p = sub.add_parser("stats", parents=[common], help="ANOVA or one-tailed t-test on a samples CSV")
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--test", required=True, choices=("anova", "ttest"))
    p.add_argument("--output", type=Path)

    p = sub.add_parser("report", parents=[common], help="summary CSVs from a completed run")
    p.add_argument("--run", type=Path, help="manifest path or run directory (default: --out)")

    sub.add_parser("run-all", parents=[common], help="full pipeline")
    return parser


def _config(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config).with_overrides(seed=args.seed, jobs=args.jobs, scale=args.scale)
    out = args.out if args.out is not None else Path(cfg.output_dir)
    return cfg, out


def _environment(cfg: ExperimentConfig, name: str | None) -> str:
    if name is None:
        return next(iter(cfg.environments))
    cfg.payoff(name)
    return name


def _pool_dirs(path: Path) -> list[Path]:
    """A pool directory, or a training output directory holding several pools."""
    if (path / "pool.json").is_file():
        return [path]
    found = sorted(p.parent for p in path.glob("*/pool.json"))
    if not found:
        raise ValidationError(f"{path} holds no checkpoint pool")
    return found


def cmd_train(cfg: ExperimentConfig, out: Path, args) -> dict:
    env = _environment(cfg, args.environment)
    payoff = cfg.payoff(env)
    scenario = cfg.scenario(args.scenario, payoff)
    p = parse_method(args.method)
    label = args.method.replace(":", "")
    tc = training_config(cfg, env, args.scenario, args.steps or cfg.loi_steps, p,
                         derive_seed(cfg.seed, "train", env, args.scenario, label), f"{env}-{args.scenario}-{label}")
    if args.save_interval:
        tc = replace(tc, save_interval=args.save_interval)
    report = train(tc, scenario, payoff)
    run_dir = out / "train" / tc.run_id
    paths = report.write(run_dir)
    manifest = open_manifest(out, cfg)
    manifest.record(f"train:{tc.run_id}", paths.values(), {"wall_steps": report.wall_steps,
                                                           "pools": [pl.run_id for pl in report.pools]})
    manifest.write()
    return {"run_dir": str(run_dir), "pools": [pl.run_id for pl in report.pools],
            "checkpoints": len(report.pools[0]), "wall_steps": report.wall_steps}


def cmd_loi(cfg: ExperimentConfig, out: Path, args) -> dict:
    env = _environment(cfg, args.environment)
    payoff = cfg.payoff(env)
    scenario = cfg.scenario(args.scenario, payoff)
    alice = [load_pool(d) for d in args.alice]
    bob = [load_pool(d) for d in args.bob]
    over = {k: getattr(args, k) for k in ("m", "n", "g") if getattr(args, k) is not None}
    if args.bin_width is not None:
        over["bin_width"] = args.bin_width
    lc = replace(cfg.loi, a=len(alice), b=len(bob), seed=derive_seed(cfg.seed, "loi", env, args.scenario), **over)
    est = estimate_loi(alice, bob, lc, scenario, payoff)
    data = {**est.to_dict(), "environment": env, "scenario": args.scenario}
    path = dump_json(data, args.output or out / "loi" / f"{env}-{args.scenario}.json")
    manifest = open_manifest(out, cfg)
    manifest.record(f"loi:{env}-{args.scenario}", [path], {"mean": est.mean, "std": est.std})
    manifest.write()
    return {"path": str(path), "mean": est.mean, "std": est.std, "samples": len(est.samples)}


def cmd_allocate(cfg: ExperimentConfig, out: Path, args) -> dict:
    by_env: dict[str, dict[str, float]] = {}
    for path in args.loi:
        if not path.is_file():
            raise ValidationError(f"LoI file {path} does not exist")
        d = json.loads(path.read_text())
        if "mean" not in d:
            raise ValidationError(f"{path} is not an LoI estimate (no 'mean')")
        env = d.get("environment", "")
        scen = d.get("scenario", path.stem)
        if scen in by_env.setdefault(env, {}):
            raise ValidationError(f"duplicate LoI for scenario {scen!r} in environment {env!r}")
        by_env[env][scen] = float(d["mean"])
    base = args.base_unit if args.base_unit is not None else cfg.scaled_base_unit
    plans = {env: allocate(lois, base, list(lois)) for env, lois in by_env.items()}
    paths = write_allocation(plans, out)
    manifest = open_manifest(out, cfg)
    manifest.record("allocate", paths.values(), {e: {"methods": p.methods, "adjustment": p.adjustment_applied,
                                                     "total_steps": p.total_steps} for e, p in plans.items()})
    manifest.write()
    return {env: {"steps": p.steps, "total_steps": p.total_steps, "adjustment": p.adjustment_applied}
            for env, p in plans.items()}


def cmd_evaluate(cfg: ExperimentConfig, out: Path, args) -> dict:
    env = _environment(cfg, args.environment)
    payoff = cfg.payoff(env)
    scenario = cfg.scenario(args.scenario, payoff)
    candidates = {}
    for spec in args.candidates:
        method, sep, dirs = spec.partition("=")
        if not sep or not dirs:
            raise ConfigurationError(f"bad --candidates entry {spec!r}; expected METHOD=DIR[,DIR]")
        pools = [load_pool(p) for d in dirs.split(",") for p in _pool_dirs(Path(d))]
        candidates[method] = [pl.latest for pl in pools]
    bobs = build_fixed_bobs(load_pool(args.bobs), cfg.evaluation.fractions)
    games = args.games or cfg.evaluation.games_per_pair
    reference = args.reference if args.reference.lower() != "none" else None
    report = fixed_bobs_eval(candidates, bobs, games, scenario, payoff,
                             seed=derive_seed(cfg.seed, "eval", env, args.scenario), reference=reference)
    paths = report.write(out / "evaluate", f"{env}-{args.scenario}")
    manifest = open_manifest(out, cfg)
    manifest.record(f"evaluate:{env}-{args.scenario}", paths.values(), {"normalized": report.normalized})
    manifest.write()
    return {"samples": str(paths["samples"]), "means": report.means, "normalized": report.normalized,
            "rows": len(report.samples)}


def cmd_stats(cfg: ExperimentConfig, out: Path, args) -> dict:
    rows = read_rows(args.report)
    result = anova_rows(rows) if args.test == "anova" else ttest_rows(rows)
    path = write_dicts(args.output or out / f"stats_{args.test}.csv", result)
    return {"path": str(path), "rows": result}


def cmd_report(cfg: ExperimentConfig, out: Path, args) -> dict:
    manifest = RunManifest.load(args.run or out)
    paths = write_report(manifest)
    return {k: str(v) for k, v in paths.items()}


def cmd_run_all(cfg: ExperimentConfig, out: Path, args) -> dict:
    manifest = run_all(cfg, out)
    return {"manifest": str(out / "manifest.json"), "stages": list(manifest.stages)}


COMMANDS = {
    "train": cmd_train, "loi": cmd_loi, "allocate": cmd_allocate, "evaluate": cmd_evaluate,
    "stats": cmd_stats, "report": cmd_report, "run-all": cmd_run_all,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _config(args)
        result = COMMANDS[args.command](cfg, out, args)
    except LoIBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(result, indent=1, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
