import math

import numpy as np
import pytest

from loi_bench.errors import ConfigurationError, UndefinedCorrelationError, ValidationError
from loi_bench.evaluation import (
    average_improvement, build_fixed_bobs, fixed_bobs_eval, normalize_means, pearson_correlation,
)
from loi_bench.game import CHICKEN
from loi_bench.policy import Checkpoint, CheckpointPool, PolicyParams

LOI = {
    "chicken": (1.291, 1.364, 1.438, 1.227),
    "pure_coordination": (1.117, 1.071, 0.976, 0.976),
    "prisoners_dilemma": (1.377, 1.385, 1.180, 1.100),
    "stag_hunt": (1.397, 1.431, 1.424, 1.063),
}
IMPROVEMENT = {
    "chicken": (1.4130, 3.8312, 4.9293, 0.0789),
    "pure_coordination": (1.7986, 1.0248, 0.9117, 0.3020),
    "prisoners_dilemma": (7.0535, 9.4688, 3.7931, 3.2389),
    "stag_hunt": (5.1652, 8.0993, 5.2341, 1.9517),
}


def grid_pool(n, interval=200_000):
    cks = tuple(Checkpoint(PolicyParams((0.0, 0.0), 0.1, 0.1, 0.0), (i + 1) * interval, "grid") for i in range(n))
    return CheckpointPool("grid", "small", "chicken", cks, n * interval)


def test_fixed_bobs_default_fractions():
    bobs = build_fixed_bobs(grid_pool(25))
    assert [c.step_index // 200_000 for c in bobs.checkpoints] == [7, 13, 19, 25]
    assert bobs.source_run == "grid" and len(bobs.ids()) == 4


def test_fixed_bobs_final_only():
    assert build_fixed_bobs(grid_pool(25), (1.0,)).checkpoints == (grid_pool(25).checkpoints[-1],)


@pytest.mark.parametrize("fractions", [(0.5, 0.5), (0.0,), (1.2,)])
def test_fixed_bobs_rejects(fractions):
    with pytest.raises(ValidationError):
        build_fixed_bobs(grid_pool(3), fractions)


def test_fixed_bobs_empty_pool():
    with pytest.raises(ValidationError):
        build_fixed_bobs(CheckpointPool("e", "small", "chicken"))


@pytest.fixture(scope="module")
def bobs(sp_pools):
    return build_fixed_bobs(sp_pools[0])


def test_sample_count(bobs, small, sp_pools):
    rep = fixed_bobs_eval({"x": [sp_pools[1].latest]}, bobs, 10, small, CHICKEN, reference=None)
    assert len(rep.samples) == 40 and rep.game_count == 10 and rep.normalized == {}


def test_self_normalization(bobs, small, sp_pools):
    cand = [sp_pools[1].latest, sp_pools[2].latest]
    rep = fixed_bobs_eval({"sp": cand, "copy": cand}, bobs, 3, small, CHICKEN, seed=4)
    assert rep.normalized == {"sp": 1.0, "copy": 1.0}


def test_report_consistency_and_determinism(bobs, small, sp_pools, tmp_path):
    cands = {"sp": [sp_pools[1].latest], "pp": [sp_pools[2].latest, sp_pools[3].latest]}
    a = fixed_bobs_eval(cands, bobs, 4, small, CHICKEN, seed=9)
    b = fixed_bobs_eval(cands, bobs, 4, small, CHICKEN, seed=9)
    assert a.samples == b.samples and a.means == b.means
    for m in cands:
        assert a.means[m] == pytest.approx(np.mean(a.method_rewards(m)), abs=1e-12)
    assert a.normalized["pp"] == a.means["pp"] / a.means["sp"]
    assert normalize_means(a.normalized) == a.normalized
    delta = average_improvement(a.means["sp"], a.means["pp"])
    assert delta == pytest.approx((np.mean(a.method_rewards("pp")) - np.mean(a.method_rewards("sp"))) / 2, abs=1e-12)
    paths = a.write(tmp_path, "e")
    lines = paths["samples"].read_text().splitlines()
    assert lines[0] == "method,candidate_id,bob_id,game,reward" and len(lines) == 1 + len(a.samples)


def test_eval_errors(bobs, small, sp_pools):
    with pytest.raises(ConfigurationError):
        fixed_bobs_eval({"pp3": [sp_pools[1].latest]}, bobs, 2, small, CHICKEN)
    with pytest.raises(ValidationError):
        fixed_bobs_eval({"sp": []}, bobs, 2, small, CHICKEN)
    with pytest.raises(ValidationError):
        fixed_bobs_eval({"sp": [sp_pools[1].latest]}, bobs, 0, small, CHICKEN)
    with pytest.raises(ValidationError):
        normalize_means({"sp": 0.0, "pp3": 1.0})


def test_average_improvement():
    assert average_improvement(2, 8) == 3
    assert average_improvement(1.7, 1.7) == 0


@pytest.mark.parametrize("env,target", [
    ("chicken", 0.98966), ("pure_coordination", 0.86309), ("prisoners_dilemma", 0.93888), ("stag_hunt", 0.86631),
])
def test_pearson_published_rows(env, target):
    tol = 0.001 if env == "chicken" else 0.01
    assert pearson_correlation(LOI[env], IMPROVEMENT[env]) == pytest.approx(target, abs=tol)


def test_pearson_matches_numpy(rng):
    for _ in range(50):
        x, y = rng.normal(size=7), rng.normal(size=7)
        assert pearson_correlation(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_linear_and_invariances(rng):
    x = rng.normal(size=9)
    assert pearson_correlation(x, 2 * x + 1) == 1.0
    assert pearson_correlation(x, -x) == -1.0
    y = rng.normal(size=9)
    r = pearson_correlation(x, y)
    assert pearson_correlation(3.5 * x - 2, 0.25 * y + 7) == pytest.approx(r, abs=1e-12)
    assert pearson_correlation(y, x) == pytest.approx(r, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation([1, 2, 3], [4, 4, 4])
    with pytest.raises(ValidationError):
        pearson_correlation([1, 2], [1, 2, 3])
    with pytest.raises(ValidationError):
        pearson_correlation([1], [1])
