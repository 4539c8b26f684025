"""One-way ANOVA and pooled two-sample t-test, with p-values from a
continued-fraction regularized incomplete beta function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateInputError, DomainError, ValidationError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    dof: tuple[float, ...]

    __test__ = False  # not a pytest class

    def row(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "dof": " ".join(f"{d:g}" for d in self.dof)}


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise DomainError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0) or not math.isfinite(a) or not math.isfinite(b):
        raise DomainError(f"incomplete beta needs a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"incomplete beta needs 0 <= x <= 1, got x={x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = a * math.log(x) + b * math.log1p(-x) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    front = math.exp(log_front)
    # the fraction converges quickly for x < (a+1)/(a+b+2); otherwise use the symmetry
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, front * _betacf(a, b, x) / a)
    return max(0.0, 1.0 - front * _betacf(b, a, 1.0 - x) / b)


def f_sf(f: float, d1: float, d2: float) -> float:
    """P(F >= f) for the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def f_cdf(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 0.0
    return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))


def t_sf(t: float, nu: float) -> float:
    """P(T >= t) for Student's t with ``nu`` degrees of freedom."""
    tail = 0.5 * regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, nu: float) -> float:
    return 1.0 - t_sf(t, nu)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    if len(groups) < 2:
        raise DegenerateInputError(f"ANOVA needs at least 2 groups, got {len(groups)}")
    groups = [[float(v) for v in g] for g in groups]
    for i, g in enumerate(groups):
        if len(g) < 2:
            raise DegenerateInputError(f"ANOVA group {i} has {len(g)} samples; need at least 2")
    k = len(groups)
    n = sum(len(g) for g in groups)
    grand = _mean([v for g in groups for v in g])
    means = [_mean(g) for g in groups]
    ss_between = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ss_within = math.fsum((v - m) ** 2 for g, m in zip(groups, means) for v in g)
    df_b, df_w = k - 1, n - k
    if ss_within == 0:
        raise DegenerateInputError("ANOVA undefined: every group has zero within-group variance")
    f = (ss_between / df_b) / (ss_within / df_w)
    return TestResult(f, f_sf(f, df_b, df_w), (float(df_b), float(df_w)))


def t_test_one_tailed(a: Sequence[float], b: Sequence[float], alternative: str = "a_greater") -> TestResult:
    """Pooled-variance Student t-test of H1: mean(a) > mean(b)."""
    if alternative != "a_greater":
        raise ValidationError(f"unsupported alternative {alternative!r}; only 'a_greater'")
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) < 2 or len(b) < 2:
        raise DegenerateInputError("each sample needs at least 2 values")
    ma, mb = _mean(a), _mean(b)
    ssa = math.fsum((v - ma) ** 2 for v in a)
    ssb = math.fsum((v - mb) ** 2 for v in b)
    dof = len(a) + len(b) - 2
    pooled = (ssa + ssb) / dof
    if pooled == 0:
        if ma == mb:
            raise DegenerateInputError("t-test undefined: both samples constant and equal")
        raise DegenerateInputError("t-test undefined: zero pooled variance")
    t = (ma - mb) / math.sqrt(pooled * (1.0 / len(a) + 1.0 / len(b)))
    return TestResult(t, t_sf(t, dof), (float(dof),))
