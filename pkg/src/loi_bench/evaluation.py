"""Fixed-Bobs cross-play evaluation, average improvement and Pearson correlation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, UndefinedCorrelationError, ValidationError
from .game.engine import play_episode
from .game.payoff import PayoffMatrix
from .game.scenario import ScenarioMap
from .policy import Checkpoint, CheckpointPool
from .seeding import derive_seed

DEFAULT_FRACTIONS = (0.28, 0.52, 0.76, 1.0)
SAMPLE_COLUMNS = ("method", "candidate_id", "bob_id", "game", "reward")


@dataclass(frozen=True)
class FixedBobs:
    checkpoints: tuple[Checkpoint, ...]
    source_run: str

    def ids(self) -> list[str]:
        return [f"{c.run_id}@{c.step_index}" for c in self.checkpoints]


def build_fixed_bobs(pool: CheckpointPool, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> FixedBobs:
    """Pick, for each fraction f, the checkpoint whose step is nearest to f * total_steps."""
    if not pool.checkpoints:
        raise ValidationError(f"pool {pool.run_id!r} is empty")
    total = pool.total_steps or pool.checkpoints[-1].step_index
    steps = np.array([c.step_index for c in pool.checkpoints], dtype=np.float64)
    picks = []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValidationError(f"fixed-Bobs fraction {f} outside (0, 1]")
        picks.append(int(np.argmin(np.abs(steps - f * total))))
    if len(set(picks)) != len(picks):
        raise ValidationError(
            f"fractions {tuple(fractions)} resolve to duplicate checkpoints {picks} in a pool of {len(pool)}"
        )
    return FixedBobs(tuple(pool.checkpoints[i] for i in picks), pool.run_id)


@dataclass
class EvaluationReport:
    means: dict[str, float]
    normalized: dict[str, float]
    game_count: int
    samples: list[tuple[str, str, str, int, float]] = field(default_factory=list)
    reference: str | None = "sp"
    metadata: dict = field(default_factory=dict)

    def method_rewards(self, method: str) -> list[float]:
        return [s[4] for s in self.samples if s[0] == method]

    def to_dict(self) -> dict:
        return {
            "means": self.means,
            "normalized": self.normalized,
            "game_count": self.game_count,
            "reference": self.reference,
            "metadata": self.metadata,
            "sample_count": len(self.samples),
        }

    def write(self, directory: str | Path, prefix: str = "evaluation") -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"json": directory / f"{prefix}.json", "samples": directory / f"{prefix}_samples.csv",
                 "summary": directory / f"{prefix}_summary.csv"}
        paths["json"].write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        with paths["samples"].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SAMPLE_COLUMNS)
            for row in self.samples:
                w.writerow([*row[:4], repr(row[4])])
        with paths["summary"].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mean_reward", "normalized_reward", "n"])
            for m, v in self.means.items():
                norm = self.normalized.get(m)
                w.writerow([m, repr(v), "" if norm is None else repr(norm), len(self.method_rewards(m))])
        return paths


def normalize_means(means: Mapping[str, float], reference: str = "sp") -> dict[str, float]:
    """Divide every method mean by the reference method's mean."""
    if reference not in means:
        raise ConfigurationError(f"normalization needs a {reference!r} method; have {sorted(means)}")
    base = means[reference]
    if base == 0:
        raise ValidationError(f"reference method {reference!r} has zero mean reward; cannot normalize")
    return {m: (1.0 if m == reference else v / base) for m, v in means.items()}


def fixed_bobs_eval(
    candidates: Mapping[str, Sequence[Checkpoint]],
    bobs: FixedBobs,
    games_per_pair: int,
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    seed: int = 0,
    reference: str | None = "sp",
) -> EvaluationReport:
    """Every candidate plays ``games_per_pair`` games against every fixed Bob.

    Game seeds depend on (candidate position, Bob, game) only, so methods
    are compared on common random numbers.
    """
    if games_per_pair < 1:
        raise ValidationError("games_per_pair must be >= 1")
    if reference is not None and reference not in candidates:
        raise ConfigurationError(f"normalization needs a {reference!r} method; have {sorted(candidates)}")
    samples = []
    means = {}
    for method, ckpts in candidates.items():
        if not ckpts:
            raise ValidationError(f"method {method!r} has no candidate checkpoints")
        rewards = []
        for ci, cand in enumerate(ckpts):
            cv = cand.params.vector()
            cid = f"{cand.run_id}@{cand.step_index}"
            for bi, (bob, bid) in enumerate(zip(bobs.checkpoints, bobs.ids())):
                bv = bob.params.vector()
                for game in range(games_per_pair):
                    r = play_episode(scenario, payoff, cv, bv, derive_seed(seed, "eval", ci, bi, game)).rewards[0]
                    samples.append((method, cid, bid, game, r))
                    rewards.append(r)
        means[method] = math.fsum(rewards) / len(rewards)
    normalized = normalize_means(means, reference) if reference is not None else {}
    return EvaluationReport(
        means, normalized, games_per_pair, samples, reference,
        {"scenario": scenario.name, "environment": payoff.name, "bobs": bobs.ids(), "seed": seed},
    )


def average_improvement(r1: float, r3: float) -> float:
    """Mean of the two population-size steps SP->PP3->PP5, which telescopes to (r3 - r1) / 2."""
    return (r3 - r1) / 2.0


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    if len(x) != len(y):
        raise ValidationError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValidationError("need at least two points")
    mx = math.fsum(x) / len(x)
    my = math.fsum(y) / len(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    return max(-1.0, min(1.0, sxy / (math.sqrt(sxx) * math.sqrt(syy))))
