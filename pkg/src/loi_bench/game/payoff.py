"""Payoff matrices and matrix-game resolution of an interaction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError

PAYOFF_MODES = ("mixed", "sampled")


@dataclass(frozen=True)
class PayoffMatrix:
    """Row-player payoff of a symmetric two-player matrix game.

    The column payoff is always ``row_payoff`` transposed and is never stored.
    ``mode`` selects how an interaction is scored: ``"mixed"`` evaluates the
    bilinear form on the inventory weights, ``"sampled"`` draws one pure
    strategy per player from those weights and reads the matrix entry.
    """

    name: str
    row_payoff: tuple[tuple[float, ...], ...]
    mode: str = "mixed"

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.row_payoff)
        object.__setattr__(self, "row_payoff", rows)
        k = len(rows)
        if k < 2:
            raise ValidationError(f"payoff {self.name!r}: need at least 2 resource types, got {k}")
        if any(len(r) != k for r in rows):
            raise ValidationError(f"payoff {self.name!r}: matrix must be {k}x{k}")
        if not np.all(np.isfinite(rows)):
            raise ValidationError(f"payoff {self.name!r}: non-finite entry")
        if self.mode not in PAYOFF_MODES:
            raise ValidationError(f"payoff {self.name!r}: unknown mode {self.mode!r}")

    @property
    def k(self) -> int:
        return len(self.row_payoff)

    @property
    def a_row(self) -> np.ndarray:
        return np.array(self.row_payoff, dtype=np.float64)

    @property
    def a_col(self) -> np.ndarray:
        return self.a_row.T


CHICKEN = PayoffMatrix("chicken", ((3, 2), (5, 0)))
PURE_COORDINATION = PayoffMatrix("pure_coordination", ((1, 0), (0, 1)))
PRISONERS_DILEMMA = PayoffMatrix("prisoners_dilemma", ((3, 0), (5, 1)))
STAG_HUNT = PayoffMatrix("stag_hunt", ((4, 0), (2, 2)))

ENVIRONMENTS = {p.name: p for p in (CHICKEN, PURE_COORDINATION, PRISONERS_DILEMMA, STAG_HUNT)}


def mixed_weights(counts: Sequence[int]) -> np.ndarray | None:
    """Inventory counts -> strategy weights, or None for an empty inventory."""
    rho = np.asarray(counts, dtype=np.float64)
    total = rho.sum()
    if total <= 0:
        return None
    return rho / total


def resolve_interaction(inv_row, inv_col, payoff: PayoffMatrix, rng: np.random.Generator | None = None):
    """Rewards ``(r_row, r_col)`` for an interaction, or None if either inventory is empty.

    In ``sampled`` mode an ``rng`` is required to draw the pure strategies.
    """
    nu_row = mixed_weights(inv_row)
    nu_col = mixed_weights(inv_col)
    if nu_row is None or nu_col is None:
        return None
    if len(nu_row) != payoff.k or len(nu_col) != payoff.k:
        raise ValidationError("inventory length does not match payoff size")
    a = payoff.a_row
    if payoff.mode == "sampled":
        if rng is None:
            raise ValueError("sampled payoff mode needs an rng")
        i = int(rng.choice(payoff.k, p=nu_row))
        j = int(rng.choice(payoff.k, p=nu_col))
        return float(a[i, j]), float(a[j, i])
    return float(nu_row @ a @ nu_col), float(nu_row @ a.T @ nu_col)
