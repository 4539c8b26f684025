import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loi_bench.errors import ValidationError
from loi_bench.game.payoff import (
    CHICKEN, ENVIRONMENTS, PRISONERS_DILEMMA, PURE_COORDINATION, STAG_HUNT, PayoffMatrix, mixed_weights,
    resolve_interaction,
)


def test_published_matrices():
    assert CHICKEN.row_payoff == ((3, 2), (5, 0))
    assert PURE_COORDINATION.row_payoff == ((1, 0), (0, 1))
    assert PRISONERS_DILEMMA.row_payoff == ((3, 0), (5, 1))
    assert STAG_HUNT.row_payoff == ((4, 0), (2, 2))
    assert set(ENVIRONMENTS) == {"chicken", "pure_coordination", "prisoners_dilemma", "stag_hunt"}


def test_column_payoff_is_transpose():
    for p in ENVIRONMENTS.values():
        np.testing.assert_array_equal(p.a_col, p.a_row.T)


def test_chicken_pure_anchor():
    assert resolve_interaction((1, 0), (0, 1), CHICKEN) == (2.0, 5.0)


def test_coordination_diagonal():
    assert resolve_interaction((3, 0), (1, 0), PURE_COORDINATION) == (1.0, 1.0)


def test_chicken_uniform_mix():
    r = resolve_interaction((2, 2), (1, 1), CHICKEN)
    assert r == pytest.approx((2.5, 2.5), abs=1e-15)


def test_empty_inventory_is_inert():
    assert resolve_interaction((0, 0), (1, 0), CHICKEN) is None
    assert resolve_interaction((1, 0), (0, 0), CHICKEN) is None


def test_mixed_weights():
    assert mixed_weights((0, 0)) is None
    w = mixed_weights((1, 3))
    np.testing.assert_allclose(w, (0.25, 0.75))
    assert abs(w.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("rows", [((1,),), ((1, 2), (3,)), ((1, 2), (3, float("nan")))])
def test_invalid_matrices(rows):
    with pytest.raises(ValidationError):
        PayoffMatrix("bad", rows)


def test_unknown_mode():
    with pytest.raises(ValidationError):
        PayoffMatrix("bad", ((1, 0), (0, 1)), mode="argmax")


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 9), min_size=2, max_size=2).filter(any),
    st.lists(st.integers(0, 9), min_size=2, max_size=2).filter(any),
    st.sampled_from(sorted(ENVIRONMENTS)),
)
def test_symmetry(p, q, env):
    payoff = ENVIRONMENTS[env]
    r_pq = resolve_interaction(p, q, payoff)
    r_qp = resolve_interaction(q, p, payoff)
    assert r_pq[0] == pytest.approx(r_qp[1], abs=1e-12)


def test_sampled_mode_reads_matrix_entries():
    sampled = PayoffMatrix("chicken", CHICKEN.row_payoff, mode="sampled")
    rng = np.random.default_rng(0)
    seen = {resolve_interaction((1, 1), (1, 1), sampled, rng) for _ in range(200)}
    assert seen == {(3.0, 3.0), (2.0, 5.0), (5.0, 2.0), (0.0, 0.0)}
    # pure inventories collapse to one entry
    assert resolve_interaction((4, 0), (0, 2), sampled, rng) == (2.0, 5.0)


def test_sampled_mode_mean_matches_mixed():
    sampled = PayoffMatrix("sh", STAG_HUNT.row_payoff, mode="sampled")
    rng = np.random.default_rng(1)
    draws = np.array([resolve_interaction((1, 3), (2, 1), sampled, rng) for _ in range(20000)])
    expect = resolve_interaction((1, 3), (2, 1), STAG_HUNT)
    se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - expect) < 4 * se)
