"""Self-play and population-play training with a (1+1) hill-climbing learner.

One training step is one environment step with both agents acting. Every
simulated step, including truncated evaluation episodes at a budget
boundary, is counted in ``wall_steps``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .game.engine import play_episode
from .game.payoff import ENVIRONMENTS, PayoffMatrix
from .game.scenario import ScenarioMap, builtin_scenario
from .policy import Checkpoint, CheckpointPool, PolicyParams, save_checkpoint, save_pool
from .seeding import derive_rng, derive_seed


@dataclass(frozen=True)
class TrainingConfig:
    scenario_id: str
    environment_id: str
    total_steps: int
    save_interval: int
    population_size: int = 1
    seed: int = 0
    discount_factor: float = 1.0
    mutation_scale: float = 0.1
    episodes_per_eval: int = 1
    run_name: str | None = None

    def validate(self) -> None:
        if self.save_interval < 1:
            raise ConfigurationError(f"save_interval must be positive, got {self.save_interval}")
        if self.total_steps < self.save_interval:
            raise ConfigurationError(
                f"total_steps ({self.total_steps}) must be at least save_interval ({self.save_interval})"
            )
        if self.population_size < 1:
            raise ConfigurationError(f"population_size must be >= 1, got {self.population_size}")
        if not 0.0 < self.discount_factor <= 1.0:
            raise ConfigurationError(f"discount_factor must lie in (0, 1], got {self.discount_factor}")
        if self.episodes_per_eval < 1:
            raise ConfigurationError("episodes_per_eval must be >= 1")
        if self.mutation_scale < 0:
            raise ConfigurationError("mutation_scale must be non-negative")

    @property
    def run_id(self) -> str:
        return self.run_name or f"{self.environment_id}-{self.scenario_id}-s{self.seed}"


@dataclass
class TrainingReport:
    config: TrainingConfig
    pools: tuple[CheckpointPool, ...]
    reward_curves: tuple[tuple[float, ...], ...]
    wall_steps: int
    coplayer_sources: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def reward_curve(self) -> list[float]:
        """Per-save mean episode reward, averaged over populations."""
        curves = np.array(self.reward_curves, dtype=np.float64)
        if not curves.size:
            return []
        # a save interval shorter than one update leaves all-NaN columns
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return [float(v) for v in np.nanmean(curves, axis=0)]

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "wall_steps": self.wall_steps,
            "pools": [p.run_id for p in self.pools],
            "save_steps": [c.step_index for c in self.pools[0].checkpoints],
            "reward_curve": [None if math.isnan(v) else v for v in self.reward_curve],
            "reward_curves": [[None if math.isnan(v) else v for v in c] for c in self.reward_curves],
            "coplayer_sources": [list(s) for s in self.coplayer_sources],
        }

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Pool directories, ``report.json`` and ``reward_curve.csv`` under ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for pool in self.pools:
            paths[pool.run_id] = save_pool(pool, directory / pool.run_id)
        rp = directory / "report.json"
        rp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        paths["report"] = rp
        cp = directory / "reward_curve.csv"
        with cp.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mean_reward"])
            for ckpt, v in zip(self.pools[0].checkpoints, self.reward_curve):
                w.writerow([ckpt.step_index, "" if math.isnan(v) else repr(v)])
        paths["reward_curve"] = cp
        return paths


class LearnerKnobs(NamedTuple):
    mutation_scale: float = 0.1
    episodes_per_eval: int = 1
    discount_factor: float = 1.0


def _evaluate(params, co_player: Checkpoint, scenario, payoff, seeds, discount):
    v0 = params.vector()
    v1 = co_player.params.vector()
    rewards, returns = [], []
    for s in seeds:
        res = play_episode(scenario, payoff, v0, v1, s, discount=discount)
        rewards.append(res.rewards[0])
        returns.append(res.discounted[0])
    return float(np.mean(rewards)), float(np.mean(returns))


def learner_update(
    current: PolicyParams,
    co_player: Checkpoint,
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    rng: np.random.Generator,
    knobs: LearnerKnobs = LearnerKnobs(),
) -> tuple[PolicyParams, float]:
    """One (1+1) hill-climbing step against a frozen co-player.

    Incumbent and perturbed candidate play the same episode seeds; the
    candidate replaces the incumbent only on a strictly higher mean
    discounted return. Returns the kept parameters and their mean
    (undiscounted) episode reward.
    """
    seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=knobs.episodes_per_eval)]
    candidate = current.perturb(knobs.mutation_scale, rng)
    inc_reward, inc_return = _evaluate(current, co_player, scenario, payoff, seeds, knobs.discount_factor)
    cand_reward, cand_return = _evaluate(candidate, co_player, scenario, payoff, seeds, knobs.discount_factor)
    if cand_return > inc_return:
        return candidate, cand_reward
    return current, inc_reward


def update_cost(scenario: ScenarioMap, knobs: LearnerKnobs) -> int:
    """Environment steps consumed by one full learner_update."""
    return 2 * knobs.episodes_per_eval * scenario.episode_length


def resolve(config: TrainingConfig, scenario: ScenarioMap | None, payoff: PayoffMatrix | None):
    if payoff is None:
        if config.environment_id not in ENVIRONMENTS:
            raise ConfigurationError(
                f"unknown environment {config.environment_id!r}; known: {', '.join(ENVIRONMENTS)}"
            )
        payoff = ENVIRONMENTS[config.environment_id]
    if scenario is None:
        scenario = builtin_scenario(config.scenario_id, payoff)
    else:
        scenario.check_payoff(payoff)
    return scenario, payoff


class _Member:
    """Mutable training state of one population member."""

    def __init__(self, config: TrainingConfig, index: int, k: int):
        suffix = f"-p{index}" if config.population_size > 1 else ""
        self.pool = CheckpointPool(config.run_id + suffix, config.scenario_id, config.environment_id)
        self.params = PolicyParams.random(k, derive_rng(config.seed, "init", index))
        self.learn_rng = derive_rng(config.seed, "learn", index)
        self.co_player = Checkpoint(self.params, 0, self.pool.run_id)
        self.curve: list[float] = []
        self.burned = 0


def _run_segment(member: _Member, steps: int, scenario, payoff, knobs: LearnerKnobs) -> tuple[int, float]:
    """Spend exactly ``steps`` environment steps; returns (steps, mean reward of completed updates)."""
    cost = update_cost(scenario, knobs)
    used = 0
    rewards = []
    while steps - used >= cost:
        member.params, r = learner_update(member.params, member.co_player, scenario, payoff, member.learn_rng, knobs)
        used += cost
        rewards.append(r)
    if steps > used:
        _burn(member, steps - used, scenario, payoff)
        used = steps
    return used, float(np.mean(rewards)) if rewards else float("nan")


def _burn(member: _Member, steps: int, scenario, payoff) -> None:
    """Simulate ``steps`` steps whose (partial) episodes are discarded."""
    v0 = member.params.vector()
    v1 = member.co_player.params.vector()
    while steps > 0:
        n = min(steps, scenario.episode_length)
        seed = derive_seed(int(member.learn_rng.integers(0, 2**63 - 1)), "burn")
        play_episode(scenario, payoff, v0, v1, seed, max_steps=n)
        steps -= n
        member.burned += n


def _train(config: TrainingConfig, scenario, payoff) -> TrainingReport:
    config.validate()
    scenario, payoff = resolve(config, scenario, payoff)
    knobs = LearnerKnobs(config.mutation_scale, config.episodes_per_eval, config.discount_factor)
    p = config.population_size
    members = [_Member(config, i, payoff.k) for i in range(p)]
    select_rng = derive_rng(config.seed, "coplayer")
    n_saves = config.total_steps // config.save_interval
    wall = 0
    sources = []
    for seg in range(n_saves):
        save_at = (seg + 1) * config.save_interval
        for m in members:
            used, mean_r = _run_segment(m, config.save_interval, scenario, payoff, knobs)
            wall += used
            m.curve.append(mean_r)
        for m in members:
            m.pool = save_checkpoint(m.pool, m.params, save_at)
        picks = tuple(int(select_rng.integers(p)) for _ in range(p))
        sources.append(picks)
        for m, src in zip(members, picks):
            m.co_player = members[src].pool.latest
    leftover = config.total_steps - n_saves * config.save_interval
    if leftover:
        for m in members:
            used, _ = _run_segment(m, leftover, scenario, payoff, knobs)
            wall += used
    pools = tuple(
        CheckpointPool(m.pool.run_id, m.pool.scenario_id, m.pool.environment_id, m.pool.checkpoints, config.total_steps)
        for m in members
    )
    return TrainingReport(config, pools, tuple(tuple(m.curve) for m in members), wall, tuple(sources))


def train_self_play(config: TrainingConfig, scenario: ScenarioMap | None = None, payoff: PayoffMatrix | None = None):
    if config.population_size != 1:
        raise ConfigurationError("self-play needs population_size=1; use train_population_play")
    return _train(config, scenario, payoff)


def train_population_play(
    config: TrainingConfig, scenario: ScenarioMap | None = None, payoff: PayoffMatrix | None = None
) -> TrainingReport:
    """Population play; with ``population_size=1`` this is exactly self-play."""
    return _train(config, scenario, payoff)


def train(config: TrainingConfig, scenario: ScenarioMap | None = None, payoff: PayoffMatrix | None = None):
    return _train(config, scenario, payoff)
