import math

import mpmath
import numpy as np
import pytest

from loi_bench.errors import DegenerateInputError, DomainError, ValidationError
from loi_bench.stats import (
    f_cdf, f_sf, one_way_anova, regularized_incomplete_beta, t_cdf, t_sf, t_test_one_tailed,
)

mpmath.mp.dps = 30


def quad_f_sf(f, d1, d2):
    d1, d2, f = mpmath.mpf(d1), mpmath.mpf(d2), mpmath.mpf(f)
    dens = lambda x: (mpmath.sqrt((d1 * x) ** d1 * d2 ** d2 / (d1 * x + d2) ** (d1 + d2))
                      / (x * mpmath.beta(d1 / 2, d2 / 2)))
    return float(mpmath.quad(dens, [f, f + 10, mpmath.inf]))


def quad_t_sf(t, nu):
    nu, t = mpmath.mpf(nu), mpmath.mpf(t)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    dens = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
    return float(mpmath.quad(dens, [t, t + 10, mpmath.inf]))


def hand_anova(groups):
    allv = [v for g in groups for v in g]
    grand = sum(allv) / len(allv)
    means = [sum(g) / len(g) for g in groups]
    ssb = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = sum((v - m) ** 2 for g, m in zip(groups, means) for v in g)
    k, n = len(groups), len(allv)
    return (ssb / (k - 1)) / (ssw / (n - k))


def hand_t(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    sp2 = (sum((v - ma) ** 2 for v in a) + sum((v - mb) ** 2 for v in b)) / (len(a) + len(b) - 2)
    return (ma - mb) / math.sqrt(sp2 * (1 / len(a) + 1 / len(b)))


def test_beta_boundaries_and_symmetry():
    for a, b in [(0.5, 0.5), (2, 3), (10, 0.5)]:
        assert regularized_incomplete_beta(a, b, 0.0) == 0.0
        assert regularized_incomplete_beta(a, b, 1.0) == 1.0
    for x in np.linspace(0, 1, 21):
        assert regularized_incomplete_beta(1, 1, x) == pytest.approx(x, abs=1e-14)
    for a in (0.3, 1, 2.5, 7, 40):
        assert regularized_incomplete_beta(a, a, 0.5) == pytest.approx(0.5, abs=1e-14)


def test_beta_matches_mpmath():
    for a in (0.5, 1.5, 4, 20):
        for b in (0.5, 2, 9):
            for x in (0.01, 0.2, 0.5, 0.77, 0.99):
                ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
                assert regularized_incomplete_beta(a, b, x) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("args", [(0, 1, 0.5), (1, -1, 0.5), (1, 1, -0.1), (1, 1, 1.1), (math.inf, 1, 0.5)])
def test_beta_domain(args):
    with pytest.raises(DomainError):
        regularized_incomplete_beta(*args)


@pytest.mark.parametrize("d1,d2", [(1, 1), (2, 5), (3, 12), (4, 40)])
@pytest.mark.parametrize("f", [0.1, 1.0, 3.0, 15.0])
def test_f_sf_oracle(f, d1, d2):
    assert f_sf(f, d1, d2) == pytest.approx(quad_f_sf(f, d1, d2), abs=1e-9)
    assert f_cdf(f, d1, d2) == pytest.approx(1 - quad_f_sf(f, d1, d2), abs=1e-9)


@pytest.mark.parametrize("nu", [1, 3, 8, 30])
@pytest.mark.parametrize("t", [-2.5, 0.0, 0.7, 4.0])
def test_t_sf_oracle(t, nu):
    assert t_sf(t, nu) == pytest.approx(quad_t_sf(t, nu), abs=1e-9)
    assert t_cdf(t, nu) == pytest.approx(1 - quad_t_sf(t, nu), abs=1e-9)


def test_cdf_monotone():
    grid = np.linspace(-6, 6, 121)
    for nu in (1, 4, 20):
        vals = [t_cdf(t, nu) for t in grid]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    for d1, d2 in [(2, 9), (5, 3)]:
        vals = [f_cdf(f, d1, d2) for f in np.linspace(0, 12, 121)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_anova_example():
    groups = [[1, 2, 3, 4], [2, 3, 4, 5], [8, 9, 10, 11]]
    res = one_way_anova(groups)
    # SSB = 114.6667 on 2 dof, SSW = 15 on 9 dof
    assert res.statistic == pytest.approx(34.4, abs=1e-9)
    assert res.statistic == pytest.approx(hand_anova(groups), abs=1e-9)
    assert res.p_value == pytest.approx(quad_f_sf(34.4, 2, 9), abs=1e-9)
    assert res.p_value == pytest.approx(6.0909e-05, abs=1e-8)
    assert res.dof == (2.0, 9.0)


def test_anova_null_case():
    res = one_way_anova([[1, 3], [0, 4], [2, 2, 2.5, 1.5]])
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_anova_random_matches_hand(rng):
    for _ in range(20):
        groups = [list(rng.normal(i, 1, size=rng.integers(2, 8))) for i in range(rng.integers(2, 5))]
        assert one_way_anova(groups).statistic == pytest.approx(hand_anova(groups), rel=1e-9)


def test_anova_degenerate():
    with pytest.raises(DegenerateInputError):
        one_way_anova([[1, 2, 3]])
    with pytest.raises(DegenerateInputError):
        one_way_anova([[1], [2, 3]])
    with pytest.raises(DegenerateInputError):
        one_way_anova([[1, 1], [1, 1]])
    with pytest.raises(DegenerateInputError):
        one_way_anova([[1, 1], [2, 2]])


def test_t_example():
    res = t_test_one_tailed([5, 6, 7, 8, 9], [1, 2, 3, 4, 5])
    assert res.statistic == pytest.approx(4.0, abs=1e-12)
    assert res.p_value == pytest.approx(quad_t_sf(4.0, 8), abs=1e-9)
    assert res.p_value == pytest.approx(0.0019749, abs=1e-7)
    assert res.dof == (8.0,)


def test_t_identical_and_sign():
    a = [1.0, 2.5, 3.0, 7.0]
    res = t_test_one_tailed(a, list(a))
    assert res.statistic == 0.0 and res.p_value == pytest.approx(0.5, abs=1e-12)
    res = t_test_one_tailed([1, 2, 3], [4, 5, 6])
    assert res.statistic < 0 and res.p_value > 0.5


def test_t_random_matches_hand(rng):
    for _ in range(20):
        a, b = list(rng.normal(0.3, 1, 6)), list(rng.normal(0, 2, 9))
        assert t_test_one_tailed(a, b).statistic == pytest.approx(hand_t(a, b), rel=1e-9)


def test_t_degenerate():
    with pytest.raises(DegenerateInputError):
        t_test_one_tailed([1, 1], [1, 1])
    with pytest.raises(DegenerateInputError):
        t_test_one_tailed([1, 1], [2, 2])
    with pytest.raises(DegenerateInputError):
        t_test_one_tailed([1], [2, 3])
    with pytest.raises(ValidationError):
        t_test_one_tailed([1, 2], [2, 3], alternative="two_sided")


def test_scale_invariance(rng):
    groups = [list(rng.normal(i, 1, 5)) for i in range(3)]
    c = 7.3
    r1, r2 = one_way_anova(groups), one_way_anova([[c * v for v in g] for g in groups])
    assert r2.statistic == pytest.approx(r1.statistic, abs=1e-12 * max(1, r1.statistic))
    assert r2.p_value == pytest.approx(r1.p_value, abs=1e-12)
    t1 = t_test_one_tailed(groups[0], groups[1])
    t2 = t_test_one_tailed([c * v for v in groups[0]], [c * v for v in groups[1]])
    assert t2.statistic == pytest.approx(t1.statistic, abs=1e-12)
    assert t2.p_value == pytest.approx(t1.p_value, abs=1e-12)


def test_row_rendering():
    assert one_way_anova([[1, 2, 3, 4], [2, 3, 4, 5], [8, 9, 10, 11]]).row()["dof"] == "2 9"
