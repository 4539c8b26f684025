"""End-to-end pipeline: train -> loi -> allocate -> evaluate -> stats -> report.

Work is split into independent cells, one per (environment, scenario,
replicate). A cell trains the LoI pools, estimates LoI, trains SP/PP3/PP5
evaluation runs and plays them against Fixed-Bobs drawn from the first Bob
pool. Because a heuristic plan only ever assigns SP, PP3 or PP5 at the same
per-population budget, the plan comparison reuses those evaluation runs.

Seed hierarchy: cell = derive_seed(root, "cell", env, scenario, replicate);
below it "loi-pool"/idx, "loi", "train"/method and "eval".
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .allocation import METHOD_POPULATION, AllocationPlan, allocate, write_allocation
from .config import ExperimentConfig
from .errors import ConfigurationError, LoIBenchError, ValidationError
from .evaluation import (
    average_improvement, build_fixed_bobs, fixed_bobs_eval, normalize_means, pearson_correlation,
)
from .loi import estimate_loi, loi_variance_study
from .policy import CheckpointPool, load_pool
from .seeding import derive_seed
from .stats import one_way_anova, t_test_one_tailed
from .trainer import TrainingConfig, train

EVAL_METHODS = ("sp", "pp3", "pp5")
MANIFEST = "manifest.json"
TIMESTAMPS = "manifest.timestamps.json"
REPORT_FILES = ("normalized_grid.csv", "loi_table.csv", "improvement_table.csv", "pearson_table.csv",
                "allocation_comparison.csv", "variance_table.csv")
SAMPLE_HEADER = ("environment", "scenario", "replicate", "method", "candidate_id", "bob_id", "game", "reward",
                 "normalized")


def parse_method(method: str) -> int:
    """Population size for ``sp``, ``pp3``, ``pp5`` or ``pp:<p>``."""
    if method in METHOD_POPULATION:
        return METHOD_POPULATION[method]
    if method.startswith("pp:"):
        try:
            p = int(method[3:])
        except ValueError:
            p = 0
        if p >= 1:
            return p
    raise ConfigurationError(f"unknown method {method!r}; use sp, pp3, pp5 or pp:<p>")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def training_config(cfg: ExperimentConfig, env: str, scenario: str, steps: int, p: int, seed: int, run_name: str):
    t = cfg.training
    return TrainingConfig(
        scenario_id=scenario, environment_id=env, total_steps=steps, save_interval=cfg.save_interval,
        population_size=p, seed=seed, discount_factor=t.discount_factor, mutation_scale=t.mutation_scale,
        episodes_per_eval=t.episodes_per_eval, run_name=run_name,
    )


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    environment: str
    scenario: str
    replicate: int

    @property
    def key(self) -> str:
        return f"{self.environment}/{self.scenario}/r{self.replicate}"

    def seed(self, root: int) -> int:
        return derive_seed(root, "cell", self.environment, self.scenario, self.replicate)


@dataclass
class CellResult:
    cell: Cell
    loi: dict  # LoIEstimate.to_dict() plus identifiers
    evaluation: dict  # EvaluationReport.to_dict()
    samples: list[tuple]  # (method, candidate_id, bob_id, game, reward)
    files: dict[str, str]  # relative path -> sha256


def cells(cfg: ExperimentConfig, environments: Sequence[str] | None = None,
          scenarios: Sequence[str] | None = None) -> list[Cell]:
    envs = list(environments or cfg.environments)
    scens = list(scenarios or cfg.scenario_names)
    return [Cell(e, s, r) for e in envs for s in scens for r in range(cfg.replicates)]


def run_cell(cfg: ExperimentConfig, cell: Cell, out: str | Path | None = None) -> CellResult:
    """Train, estimate LoI and evaluate one cell; optionally persist under ``out``."""
    payoff = cfg.payoff(cell.environment)
    scenario = cfg.scenario(cell.scenario, payoff)
    root = cell.seed(cfg.seed)
    lc = cfg.loi
    files: dict[str, Path] = {}
    base = Path(out) / "cells" / cell.environment / cell.scenario / f"r{cell.replicate}" if out else None

    pools = []
    for idx in range(lc.a + lc.b):
        tc = training_config(cfg, cell.environment, cell.scenario, cfg.loi_steps, 1,
                             derive_seed(root, "loi-pool", idx), f"loi-{idx}")
        rep = train(tc, scenario, payoff)
        pools.append(rep.pools[0])
        if base:
            files.update(rep.write(base / "loi_pools" / f"loi-{idx}"))
    est = estimate_loi(pools[: lc.a], pools[lc.a:], replace(lc, seed=derive_seed(root, "loi")), scenario, payoff)
    loi = {**est.to_dict(), "environment": cell.environment, "scenario": cell.scenario, "replicate": cell.replicate}

    candidates = {}
    for method in EVAL_METHODS:
        tc = training_config(cfg, cell.environment, cell.scenario, cfg.eval_steps, parse_method(method),
                             derive_seed(root, "train", method), f"eval-{method}")
        rep = train(tc, scenario, payoff)
        candidates[method] = [p.latest for p in rep.pools]
        if base:
            files.update({f"{method}:{k}": v for k, v in rep.write(base / "eval_pools" / method).items()})

    bobs = build_fixed_bobs(pools[lc.a], cfg.evaluation.fractions)
    report = fixed_bobs_eval(candidates, bobs, cfg.evaluation.games_per_pair, scenario, payoff,
                             seed=derive_seed(root, "eval"))
    report.metadata["replicate"] = cell.replicate
    if base:
        files["loi"] = dump_json(loi, base / "loi.json")
        files.update({f"eval:{k}": v for k, v in report.write(base, "evaluation").items()})
    hashes = {}
    if base:
        for p in files.values():
            hashes[Path(p).relative_to(out).as_posix()] = sha256_file(p)
    return CellResult(cell, loi, report.to_dict(), report.samples, dict(sorted(hashes.items())))


def _run_cell_job(args):
    cfg, cell, out = args
    return run_cell(cfg, cell, out)


def run_cells(cfg: ExperimentConfig, todo: Sequence[Cell], out: str | Path | None = None) -> list[CellResult]:
    """Run cells serially or on a process pool; results come back in input order either way."""
    jobs = [(cfg, c, out) for c in todo]
    if cfg.jobs <= 1 or len(todo) <= 1:
        return [_run_cell_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_run_cell_job, jobs))


# ---------------------------------------------------------------- aggregation


def mean_lois(results: Iterable[CellResult]) -> dict[str, dict[str, float]]:
    """environment -> scenario -> LoI mean over replicates."""
    acc: dict[str, dict[str, list[float]]] = {}
    for r in results:
        acc.setdefault(r.cell.environment, {}).setdefault(r.cell.scenario, []).append(r.loi["mean"])
    return {e: {s: float(np.mean(v)) for s, v in d.items()} for e, d in acc.items()}


def normalized_samples(results: Iterable[CellResult]) -> list[tuple]:
    """Long table of raw rewards, each divided by its cell's SP mean."""
    rows = []
    for r in results:
        sp = r.evaluation["means"]["sp"]
        for method, cid, bid, game, reward in r.samples:
            norm = reward / sp if sp != 0 else float("nan")
            rows.append((r.cell.environment, r.cell.scenario, r.cell.replicate, method, cid, bid, game, reward, norm))
    return rows


def normalized_grid(results: Iterable[CellResult]) -> dict[tuple[str, str], dict[str, float]]:
    """(environment, scenario) -> method -> normalized mean, averaged over replicates."""
    acc: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in results:
        d = acc.setdefault((r.cell.environment, r.cell.scenario), {})
        for m, v in r.evaluation["normalized"].items():
            d.setdefault(m, []).append(v)
    return {k: {m: float(np.mean(v)) for m, v in d.items()} for k, d in acc.items()}


def plan_samples(rows: Sequence[tuple], plans: Mapping[str, AllocationPlan]) -> list[tuple]:
    """Normalized samples under the heuristic and the uniform (all-PP3) plan."""
    out = []
    for env, scen, rep, method, cid, bid, game, reward, norm in rows:
        if env not in plans:
            continue
        if method == plans[env].methods[scen]:
            out.append((env, "heuristic", scen, rep, method, reward, norm))
        if method == "pp3":
            out.append((env, "uniform", scen, rep, method, reward, norm))
    return out


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def read_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path} does not exist")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def anova_rows(rows: Sequence[Mapping]) -> list[dict]:
    """One ANOVA across methods per (environment, scenario) group of a samples table."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    for r in rows:
        key = (r.get("environment", ""), r.get("scenario", ""))
        groups.setdefault(key, {}).setdefault(r["method"], []).append(float(r["reward"]))
    if not groups:
        raise ValidationError("samples table is empty")
    out = []
    for (env, scen), by_method in groups.items():
        res = one_way_anova([by_method[m] for m in sorted(by_method)])
        out.append({"environment": env, "scenario": scen, "methods": " ".join(sorted(by_method)),
                    "sample_unit": "game", **res.row()})
    return out


def ttest_rows(rows: Sequence[Mapping]) -> list[dict]:
    """Per environment: heuristic-plan normalized reward greater than uniform-plan."""
    groups: dict[str, dict[str, list[float]]] = {}
    for r in rows:
        if "plan" not in r:
            raise ValidationError("t-test needs a plan-samples table with a 'plan' column")
        groups.setdefault(r.get("environment", ""), {}).setdefault(r["plan"], []).append(float(r["normalized"]))
    if not groups:
        raise ValidationError("plan-samples table is empty")
    out = []
    for env, by_plan in groups.items():
        if "heuristic" not in by_plan or "uniform" not in by_plan:
            raise ValidationError(f"environment {env!r} lacks heuristic or uniform samples")
        res = t_test_one_tailed(by_plan["heuristic"], by_plan["uniform"])
        out.append({"environment": env, **res.row()})
    return out


def write_dicts(path: Path, rows: Sequence[Mapping]) -> Path:
    if not rows:
        raise ValidationError(f"nothing to write to {path}")
    return write_rows(path, list(rows[0]), ([r[k] for k in rows[0]] for r in rows))


# ---------------------------------------------------------------- manifest


class RunManifest:
    """Stage records with content hashes of every artifact, relative to the run directory.

    Wall-clock timestamps live in a sidecar file so that the manifest itself
    is a pure function of the config and root seed.
    """

    def __init__(self, root: str | Path, config: dict | None = None):
        self.root = Path(root)
        self.config = config
        self.stages: dict[str, dict] = {}
        self.timestamps: dict[str, str] = {}

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST
        if not path.is_file():
            raise ValidationError(f"no manifest at {path}")
        data = json.loads(path.read_text())
        m = cls(path.parent, data.get("config"))
        m.stages = data.get("stages", {})
        ts = path.parent / TIMESTAMPS
        if ts.is_file():
            m.timestamps = json.loads(ts.read_text())
        return m

    def record(self, stage: str, files: Iterable[str | Path] = (), results: dict | None = None,
               hashes: Mapping[str, str] | None = None) -> None:
        entry = {"files": dict(hashes or {}), "results": results or {}}
        for f in files:
            # paths inside the run directory are stored relative to it, others absolute
            p = Path(f).resolve()
            root = self.root.resolve()
            rel = p.relative_to(root).as_posix() if p.is_relative_to(root) else p.as_posix()
            entry["files"][rel] = sha256_file(p)
        entry["files"] = dict(sorted(entry["files"].items()))
        self.stages[stage] = entry
        self.timestamps[stage] = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def require(self, stage: str) -> dict:
        if stage not in self.stages:
            raise ValidationError(
                f"manifest {self.root / MANIFEST} has no {stage!r} stage entry; run that stage (or run-all) first"
            )
        return self.stages[stage]

    def verify(self) -> None:
        """Every recorded file exists and still matches its hash."""
        for stage, entry in self.stages.items():
            for rel, digest in entry["files"].items():
                p = self.root / rel
                if not p.is_file():
                    raise ValidationError(f"stage {stage!r}: recorded file {rel} is missing")
                if sha256_file(p) != digest:
                    raise ValidationError(f"stage {stage!r}: {rel} changed since it was recorded")

    def write(self) -> Path:
        path = dump_json({"config": self.config, "stages": self.stages}, self.root / MANIFEST)
        dump_json(self.timestamps, self.root / TIMESTAMPS)
        return path


def open_manifest(out: Path, cfg: ExperimentConfig) -> RunManifest:
    if (out / MANIFEST).is_file():
        m = RunManifest.load(out)
        m.config = cfg.echo()
        return m
    return RunManifest(out, cfg.echo())


# ---------------------------------------------------------------- run-all


def run_all(cfg: ExperimentConfig, out: str | Path) -> RunManifest:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, cfg.echo())
    results = run_cells(cfg, cells(cfg), out)

    train_hashes = {k: v for r in results for k, v in r.files.items() if "/loi_pools/" in k or "/eval_pools/" in k}
    manifest.record("train", hashes=train_hashes, results={
        "loi_steps": cfg.loi_steps, "eval_steps": cfg.eval_steps, "save_interval": cfg.save_interval,
    })
    lois = mean_lois(results)
    loi_rows = [(r.cell.environment, r.cell.scenario, r.cell.replicate, r.loi["mean"], r.loi["std"]) for r in results]
    loi_csv = write_rows(out / "loi.csv", ("environment", "scenario", "replicate", "loi_mean", "loi_std"), loi_rows)
    manifest.record("loi", [loi_csv], {"lois": lois}, {k: v for r in results for k, v in r.files.items()
                                                        if k.endswith("/loi.json")})

    order = cfg.scenario_names
    if len(order) >= 2:
        plans = {env: allocate(lois[env], cfg.scaled_base_unit, order) for env in lois}
        alloc_files = write_allocation(plans, out)
        manifest.record("allocate", alloc_files.values(), {
            env: {"methods": p.methods, "adjustment": p.adjustment_applied, "total_steps": p.total_steps,
                  "uniform_total_steps": 3 * cfg.scaled_base_unit * len(order)}
            for env, p in plans.items()
        })
    else:
        plans = {}

    rows = normalized_samples(results)
    samples_csv = write_rows(out / "samples.csv", SAMPLE_HEADER, rows)
    prow = plan_samples(rows, plans)
    plan_csv = write_rows(out / "plan_samples.csv",
                          ("environment", "plan", "scenario", "replicate", "method", "reward", "normalized"), prow)
    manifest.record("evaluate", [samples_csv, plan_csv],
                    {f"{r.cell.key}": r.evaluation["normalized"] for r in results},
                    {k: v for r in results for k, v in r.files.items() if "/evaluation" in k})

    stats_files = [write_dicts(out / "stats_anova.csv", anova_rows(read_rows(samples_csv)))]
    if prow:
        stats_files.append(write_dicts(out / "stats_ttest.csv", ttest_rows(read_rows(plan_csv))))
    manifest.record("stats", stats_files)

    if cfg.variance is not None:
        v = cfg.variance
        payoff = cfg.payoff(v.environment)
        scen = cfg.scenario(v.scenario, payoff)
        template = training_config(cfg, v.environment, v.scenario, cfg.loi_steps, 1, 0, "variance")
        study = loi_variance_study(v.bob_counts, v.repeats, cfg.loi, scen, payoff, template,
                                   seed=derive_seed(cfg.seed, "variance"))
        vp = dump_json({"environment": v.environment, "scenario": v.scenario,
                        "means": {str(b): m for b, m in study.means.items()},
                        "variances": {str(b): x for b, x in study.variances.items()}}, out / "variance.json")
        manifest.record("variance", [vp], {str(b): x for b, x in study.variances.items()})

    manifest.write()
    if "allocate" in manifest.stages and "variance" in manifest.stages:
        write_report(manifest)
        manifest.record("report", [out / "report" / f for f in REPORT_FILES])
        manifest.write()
    return manifest


# ---------------------------------------------------------------- report


def _ci(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) < 2:
        return float(arr.mean()), float("nan")
    return float(arr.mean()), float(1.96 * arr.std(ddof=1) / math.sqrt(len(arr)))


def write_report(manifest: RunManifest, directory: str | Path | None = None) -> dict[str, Path]:
    """Six plot-ready CSVs built from a completed run's manifest."""
    manifest.verify()
    root = manifest.root
    out = Path(directory) if directory else root / "report"
    manifest.require("train")
    manifest.require("loi")
    manifest.require("evaluate")
    alloc = manifest.require("allocate")
    variance = manifest.require("variance")

    samples = read_rows(root / "samples.csv")
    paths = {}

    # (environment, scenario) -> method -> normalized mean, averaged over replicates
    grid: dict[tuple[str, str], dict[str, list[float]]] = {}
    raw: dict[tuple[str, str], dict[str, list[float]]] = {}
    per_cell: dict[tuple[str, str, str], dict[str, list[float]]] = {}
    for r in samples:
        per_cell.setdefault((r["environment"], r["scenario"], r["replicate"]), {}).setdefault(
            r["method"], []).append(float(r["reward"]))
        raw.setdefault((r["environment"], r["scenario"]), {}).setdefault(r["method"], []).append(float(r["reward"]))
    for (env, scen, _), d in per_cell.items():
        g = grid.setdefault((env, scen), {})
        for m, v in normalize_means({m: math.fsum(v) / len(v) for m, v in d.items()}).items():
            g.setdefault(m, []).append(v)
    paths["normalized_grid"] = write_rows(
        out / "normalized_grid.csv", ("environment", "scenario", *EVAL_METHODS),
        ((env, scen, *[float(np.mean(g[m])) for m in EVAL_METHODS]) for (env, scen), g in grid.items()),
    )

    stored = manifest.stages["loi"]["results"]["lois"]
    loi_rows = read_rows(root / "loi.csv")
    loi_std = {}
    lois: dict[str, dict[str, float]] = {}
    # the manifest's JSON keys are sorted, so row order comes from loi.csv
    for r in loi_rows:
        env, scen = r["environment"], r["scenario"]
        loi_std.setdefault((env, scen), []).append(float(r["loi_std"]))
        lois.setdefault(env, {})[scen] = stored[env][scen]
    paths["loi_table"] = write_rows(
        out / "loi_table.csv", ("environment", "scenario", "loi_mean", "loi_std"),
        ((env, scen, v, float(np.mean(loi_std[(env, scen)]))) for env, d in lois.items() for scen, v in d.items()),
    )

    improvements = {}
    for (env, scen), g in raw.items():
        improvements.setdefault(env, {})[scen] = average_improvement(float(np.mean(g["sp"])), float(np.mean(g["pp5"])))
    paths["improvement_table"] = write_rows(
        out / "improvement_table.csv", ("environment", "scenario", "r_sp", "r_pp5", "improvement"),
        ((env, scen, float(np.mean(raw[(env, scen)]["sp"])), float(np.mean(raw[(env, scen)]["pp5"])), d)
         for env, dd in improvements.items() for scen, d in dd.items()),
    )

    prow = []
    for env, d in lois.items():
        scens = list(d)
        x = [d[s] for s in scens]
        y = [improvements[env][s] for s in scens]
        try:
            coef = pearson_correlation(x, y)
        except LoIBenchError as exc:  # undefined for constant inputs or fewer than 2 scenarios
            coef = float("nan")
            note = type(exc).__name__
        else:
            note = ""
        prow.append((env, len(scens), coef, note))
    paths["pearson_table"] = write_rows(out / "pearson_table.csv", ("environment", "n", "coefficient", "note"), prow)

    arows = []
    plan_rows = read_rows(root / "plan_samples.csv") if (root / "plan_samples.csv").is_file() else []
    by_plan: dict[tuple[str, str], dict[tuple, list[float]]] = {}
    for r in plan_rows:
        by_plan.setdefault((r["environment"], r["plan"]), {}).setdefault(
            (r["scenario"], r["replicate"]), []).append(float(r["normalized"]))
    for (env, plan), d in by_plan.items():
        # one value per (scenario, replicate) cell, then a normal-approximation interval over cells
        mean, half = _ci([float(np.mean(v)) for v in d.values()])
        total = alloc["results"][env]["total_steps" if plan == "heuristic" else "uniform_total_steps"]
        arows.append((env, plan, mean, half, total))
    paths["allocation_comparison"] = write_rows(
        out / "allocation_comparison.csv", ("environment", "plan", "normalized_mean", "ci95_half_width", "total_steps"),
        arows,
    )

    vres = variance["results"]
    vdata = json.loads((root / "variance.json").read_text())
    paths["variance_table"] = write_rows(
        out / "variance_table.csv", ("environment", "scenario", "b", "repeats", "mean_loi", "variance"),
        ((vdata["environment"], vdata["scenario"], int(b), len(vdata["means"][b]), float(np.mean(vdata["means"][b])), x)
         for b, x in vres.items()),
    )
    return paths


def cell_summary(results: Sequence[CellResult]) -> dict:
    return {r.cell.key: {"loi": r.loi["mean"], "normalized": r.evaluation["normalized"]} for r in results}


def training_summary(report) -> dict:
    return {"config": asdict(report.config), "wall_steps": report.wall_steps, "pools": [p.run_id for p in report.pools]}


def load_pools(dirs: Sequence[str | Path]) -> list[CheckpointPool]:
    return [load_pool(d) for d in dirs]
