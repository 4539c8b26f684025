import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from loi_bench.cli import main
from loi_bench.pipeline import REPORT_FILES, RunManifest, write_report

TINY = """\
seed: 7
environments: [chicken, stag_hunt]
scenarios: [small, medium]
episode_length: 200
training: {loi_steps: 400000, eval_steps: 400000, save_interval: 20000}
loi: {m: 2, n: 3, g: 2, b: 2}
evaluation: {games_per_pair: 2}
variance: {bob_counts: [1, 2], repeats: 2}
"""


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    path.write_text(TINY)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny):
    """SP and PP3 pools on the small map, trained through the CLI."""
    out = tmp_path_factory.mktemp("train")
    results = {}
    for args in (["--method", "sp", "--steps", "50000", "--save-interval", "2000"], ["--method", "pp:3", "--steps", "4000"],
                 ["--method", "pp5", "--steps", "2000"]):
        assert main(["train", "--config", str(tiny), "--out", str(out), "--scenario", "small", *args]) == 0
    return out


def test_train_sp_cadence(trained):
    pool = json.loads((trained / "train" / "chicken-small-sp" / "chicken-small-sp" / "pool.json").read_text())
    assert len(pool["checkpoints"]) == 25
    man = RunManifest.load(trained)
    assert "train:chicken-small-sp" in man.stages
    man.verify()


def test_train_pp3_pools(trained):
    pools = sorted(p.parent.name for p in (trained / "train" / "chicken-small-pp3").glob("*/pool.json"))
    assert len(pools) == 3


def test_train_seed_changes_pools(trained, tiny, tmp_path):
    assert main(["train", "--config", str(tiny), "--out", str(tmp_path), "--scenario", "small",
                 "--steps", "50000", "--seed", "1", "--save-interval", "2000"]) == 0
    a = json.loads((pool_dir(trained, "sp") / "pool.json").read_text())
    b = json.loads((pool_dir(tmp_path, "sp") / "pool.json").read_text())
    assert len(b["checkpoints"]) == 25
    last = b["checkpoints"][-1]
    assert (pool_dir(trained, "sp") / last).read_bytes() != (pool_dir(tmp_path, "sp") / last).read_bytes()


def test_train_unknown_scenario(tiny, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--config", tiny, "--out", tmp_path, "--scenario", "huge")
    assert code == 2 and "known scenarios: small, medium" in err


def test_train_bad_method(tiny, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--config", tiny, "--out", tmp_path, "--scenario", "small", "--method", "pp")
    assert code == 2


def pool_dir(trained, label, i=None):
    base = trained / "train" / f"chicken-small-{label}"
    dirs = sorted(p.parent for p in base.glob("*/pool.json"))
    return dirs[0] if i is None else dirs[i]


def test_loi_defaults_echo_and_degenerate(trained, tmp_path, capsys):
    code, res, _ = run(capsys, "loi", "--out", tmp_path, "--scenario", "small", "--alice", pool_dir(trained, "sp"),
                       "--bob", pool_dir(trained, "pp3", 0), "--n", "1", "--m", "2")
    assert code == 0 and res["mean"] == 0.0
    data = json.loads((tmp_path / "loi" / "chicken-small.json").read_text())
    assert data["config"]["g"] == 6 and data["config"]["b"] == 1 and data["config"]["n"] == 1


def test_loi_byte_identical(trained, tmp_path, capsys):
    args = ["loi", "--scenario", "small", "--alice", pool_dir(trained, "sp"),
            "--bob", pool_dir(trained, "pp3", 0), pool_dir(trained, "pp3", 1), "--m", "2", "--n", "3", "--g", "2"]
    texts = []
    for i in range(2):
        code, res, _ = run(capsys, *args, "--output", tmp_path / f"l{i}.json", "--out", tmp_path)
        assert code == 0
        texts.append((tmp_path / f"l{i}.json").read_bytes())
    assert texts[0] == texts[1]
    assert json.loads(texts[0])["config"]["a"] == 1


def test_loi_insufficient_checkpoints(trained, tmp_path, capsys):
    code, _, err = run(capsys, "loi", "--out", tmp_path, "--scenario", "small", "--alice", pool_dir(trained, "pp5", 0),
                       "--bob", pool_dir(trained, "pp3", 0), "--m", "4")
    assert code == 3 and "error:" in err


def write_lois(tmp_path, values, env="chicken"):
    paths = []
    for scen, v in zip(["small", "medium", "large", "obstacle"], values):
        p = tmp_path / f"{env}-{scen}.json"
        p.write_text(json.dumps({"mean": v, "std": 0.1, "environment": env, "scenario": scen}))
        paths.append(p)
    return paths


def test_allocate_chicken_column(tmp_path, capsys):
    files = write_lois(tmp_path, [1.291, 1.364, 1.438, 1.227])
    code, res, _ = run(capsys, "allocate", "--out", tmp_path, "--base-unit", "10000000", "--loi", *files)
    assert code == 0
    assert res["chicken"]["steps"] == {"small": 30_000_000, "medium": 30_000_000, "large": 50_000_000,
                                       "obstacle": 10_000_000}
    assert res["chicken"]["total_steps"] == 120_000_000
    rows = list(csv.reader((tmp_path / "allocation.csv").open()))
    assert rows[-1] == ["total", "120000000"]


def test_allocate_default_base_unit(tmp_path, capsys):
    files = write_lois(tmp_path, [1.0, 1.1, 1.2, 1.3])
    code, res, _ = run(capsys, "allocate", "--out", tmp_path, "--loi", *files)
    assert code == 0 and res["chicken"]["total_steps"] == 4 * 3 * 100_000


def test_allocate_errors(tmp_path, capsys):
    files = write_lois(tmp_path, [1.0])
    code, _, err = run(capsys, "allocate", "--out", tmp_path, "--loi", *files)
    assert code == 3 and "at least 2" in err
    code, _, _ = run(capsys, "allocate", "--out", tmp_path, "--loi", tmp_path / "missing.json", *files)
    assert code == 3
    code, _, _ = run(capsys, "allocate", "--out", tmp_path, "--loi", files[0], files[0])
    assert code == 3


def test_evaluate(trained, tmp_path, capsys):
    args = ["evaluate", "--out", tmp_path, "--scenario", "small", "--bobs", pool_dir(trained, "sp"), "--games", "2",
            "--candidates", f"sp={pool_dir(trained, 'pp5', 0)}", f"pp3={trained / 'train' / 'chicken-small-pp3'}"]
    code, res, _ = run(capsys, *args)
    assert code == 0
    assert res["rows"] == (1 + 3) * 4 * 2
    assert res["normalized"]["sp"] == 1.0
    first = (tmp_path / "evaluate" / "chicken-small_samples.csv").read_bytes()
    assert run(capsys, *args)[0] == 0
    assert (tmp_path / "evaluate" / "chicken-small_samples.csv").read_bytes() == first
    code, _, err = run(capsys, *args[:-2], f"pp3={pool_dir(trained, 'pp5', 0)}")
    assert code == 2 and "'sp'" in err
    code, _, _ = run(capsys, *args[:-2], "pp3")
    assert code == 2


def test_stats(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    with samples.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["environment", "scenario", "replicate", "method", "candidate_id", "bob_id", "game", "reward",
                    "normalized"])
        for scen in ("small", "large"):
            for m, vals in (("sp", [1, 2, 3, 4]), ("pp3", [2, 3, 4, 5]), ("pp5", [8, 9, 10, 11])):
                for i, v in enumerate(vals):
                    w.writerow(["chicken", scen, 0, m, "c", "b", i, v, v])
    code, res, _ = run(capsys, "stats", "--out", tmp_path, "--report", samples, "--test", "anova")
    assert code == 0 and len(res["rows"]) == 2
    assert res["rows"][0]["statistic"] == pytest.approx(34.4)
    plan = tmp_path / "p.csv"
    with plan.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["environment", "plan", "scenario", "replicate", "method", "reward", "normalized"])
        for p, vals in (("heuristic", [5, 6, 7, 8, 9]), ("uniform", [1, 2, 3, 4, 5])):
            for i, v in enumerate(vals):
                w.writerow(["chicken", p, f"s{i}", 0, "sp", v, v])
    code, res, _ = run(capsys, "stats", "--out", tmp_path, "--report", plan, "--test", "ttest")
    assert code == 0 and len(res["rows"]) == 1
    assert res["rows"][0]["statistic"] == pytest.approx(4.0)
    flat = tmp_path / "flat.csv"
    flat.write_text(samples.read_text().replace(",1,1\n", ",5,5\n"))
    with flat.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["environment", "scenario", "replicate", "method", "candidate_id", "bob_id", "game", "reward",
                    "normalized"])
        for m in ("sp", "pp3"):
            for i in range(3):
                w.writerow(["chicken", "small", 0, m, "c", "b", i, 1, 1])
    code, _, err = run(capsys, "stats", "--out", tmp_path, "--report", flat, "--test", "anova")
    assert code == 4 and "zero within-group variance" in err


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, tiny):
    out = tmp_path_factory.mktemp("run")
    assert main(["run-all", "--config", str(tiny), "--out", str(out)]) == 0
    return out


def test_run_all_and_report(full_run, tmp_path, capsys):
    report = full_run / "report"
    assert sorted(p.name for p in report.iterdir()) == sorted(REPORT_FILES)
    before = {f: (report / f).read_bytes() for f in REPORT_FILES}
    code, res, _ = run(capsys, "report", "--run", full_run / "manifest.json")
    assert code == 0 and len(res) == 6
    assert {f: (report / f).read_bytes() for f in REPORT_FILES} == before
    grid = list(csv.DictReader((report / "normalized_grid.csv").open()))
    assert len(grid) == 4 and all(float(r["sp"]) == 1.0 for r in grid)
    samples = list(csv.DictReader((full_run / "samples.csv").open()))
    for r in csv.DictReader((report / "improvement_table.csv").open()):
        def mean(m):
            return np.mean([float(s["reward"]) for s in samples
                            if (s["environment"], s["scenario"], s["method"]) == (r["environment"], r["scenario"], m)])
        assert float(r["improvement"]) == pytest.approx((mean("pp5") - mean("sp")) / 2, abs=1e-12)
    anova = list(csv.DictReader((full_run / "stats_anova.csv").open()))
    assert len(anova) == 4 and {a["sample_unit"] for a in anova} == {"game"}
    alloc = list(csv.DictReader((report / "allocation_comparison.csv").open()))
    for env in ("chicken", "stag_hunt"):
        totals = {r["plan"]: r["total_steps"] for r in alloc if r["environment"] == env}
        assert totals["heuristic"] == totals["uniform"]


def test_run_all_parallel_matches_serial(full_run, tiny, tmp_path):
    assert main(["run-all", "--config", str(tiny), "--out", str(tmp_path), "--jobs", "2"]) == 0
    assert (tmp_path / "manifest.json").read_bytes() == (full_run / "manifest.json").read_bytes()


def test_report_missing_stage(tiny, tmp_path, capsys):
    cfg = tmp_path / "novar.yaml"
    cfg.write_text(TINY.replace("variance: {bob_counts: [1, 2], repeats: 2}", "variance: null"))
    assert main(["run-all", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    code, _, err = run(capsys, "report", "--run", tmp_path / "r")
    assert code == 3 and "'variance'" in err


def test_report_detects_tampering(full_run, tmp_path, capsys):
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(full_run, copy)
    (copy / "loi.csv").write_text("tampered\n")
    code, _, err = run(capsys, "report", "--run", copy)
    assert code == 3 and "changed" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "loi_bench", "train", "--out", str(tmp_path), "--scenario", "huge"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr.startswith("error:")
