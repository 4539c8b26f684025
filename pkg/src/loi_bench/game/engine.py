"""Seedable two-player gridworld: reset, step, observe and whole-episode play."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import TerminalStateError, ValidationError
from ..seeding import MASK64, derive_seed
from . import _kernels as K
from .payoff import PayoffMatrix
from .scenario import ScenarioMap

NOOP, MOVE_N, MOVE_E, MOVE_S, MOVE_W, TURN_LEFT, TURN_RIGHT, FIRE = range(8)
ACTION_NAMES = ("noop", "move_n", "move_e", "move_s", "move_w", "turn_left", "turn_right", "fire")
FACING_NAMES = ("N", "E", "S", "W")
OBS_FLOOR, OBS_WALL, OBS_SELF, OBS_OTHER, OBS_RESOURCE = K.OBS_FLOOR, K.OBS_WALL, K.OBS_SELF, K.OBS_OTHER, K.OBS_RESOURCE


class StepCounter:
    """Counts every environment step simulated in this process."""

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


step_counter = StepCounter()


class RngStream:
    """Explicit splitmix64 random stream shared by the Python and compiled paths."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = np.array([int(seed) & MASK64], dtype=np.uint64)

    def random(self) -> float:
        return float(K.next_float(self.state))

    def copy(self) -> "RngStream":
        other = RngStream(0)
        other.state[:] = self.state
        return other

    def __eq__(self, other):
        return isinstance(other, RngStream) and int(self.state[0]) == int(other.state[0])


class AgentView(NamedTuple):
    position: tuple[int, int]
    facing: int
    inventory: tuple[int, ...]
    respawn_countdown: int | None
    beam_cooldown: int
    episode_reward: float


@dataclass
class GridState:
    """Full simulator state. ``step`` returns new states and never mutates its input."""

    scenario: ScenarioMap
    payoff: PayoffMatrix
    tick: int
    agents: np.ndarray  # (2, 5): row, col, facing, respawn countdown (0 = active), beam cooldown
    inventories: np.ndarray  # (2, k)
    rewards: np.ndarray  # (2,) accumulated episode reward
    res_type: np.ndarray  # (h, w) resource type materialized at reset, -1 elsewhere
    res_present: np.ndarray  # (h, w) 1 where a resource can be collected
    regen: np.ndarray  # (h, w) steps until regeneration
    rng: np.ndarray  # (1,) uint64 environment stream

    def copy(self) -> "GridState":
        return GridState(
            self.scenario,
            self.payoff,
            self.tick,
            self.agents.copy(),
            self.inventories.copy(),
            self.rewards.copy(),
            self.res_type.copy(),
            self.res_present.copy(),
            self.regen.copy(),
            self.rng.copy(),
        )

    @property
    def done(self) -> bool:
        return self.tick >= self.scenario.episode_length

    def agent(self, i: int) -> AgentView:
        a = self.agents[i]
        countdown = int(a[K.A_COUNTDOWN])
        return AgentView(
            (int(a[K.A_Y]), int(a[K.A_X])),
            int(a[K.A_FACING]),
            tuple(int(v) for v in self.inventories[i]),
            countdown if countdown > 0 else None,
            int(a[K.A_COOLDOWN]),
            float(self.rewards[i]),
        )

    def is_active(self, i: int) -> bool:
        return int(self.agents[i, K.A_COUNTDOWN]) == 0

    def fingerprint(self) -> bytes:
        parts = [np.int64(self.tick).tobytes()]
        parts += [a.tobytes() for a in (self.agents, self.inventories, self.rewards, self.res_type,
                                        self.res_present, self.regen, self.rng)]
        return b"".join(parts)


@dataclass(frozen=True)
class Event:
    kind: str  # "collect", "beam", "interaction", "inert", "respawn"
    agent: int | None = None
    resource_type: int | None = None
    rewards: tuple[float, float] | None = None


@dataclass(frozen=True)
class Observation:
    window: np.ndarray
    own_inventory: tuple[int, ...]
    tick: int
    facing: int


def _mode_code(payoff: PayoffMatrix) -> int:
    return 0 if payoff.mode == "mixed" else 1


def reset(scenario: ScenarioMap, payoff: PayoffMatrix, seed: int) -> GridState:
    scenario.check_payoff(payoff)
    arr = scenario.arrays
    h, w = scenario.height, scenario.width
    state = GridState(
        scenario=scenario,
        payoff=payoff,
        tick=0,
        agents=np.zeros((2, 5), dtype=np.int64),
        inventories=np.zeros((2, payoff.k), dtype=np.int64),
        rewards=np.zeros(2, dtype=np.float64),
        res_type=np.empty((h, w), dtype=np.int64),
        res_present=np.empty((h, w), dtype=np.int8),
        regen=np.empty((h, w), dtype=np.int64),
        rng=np.array([int(seed) & MASK64], dtype=np.uint64),
    )
    K.reset_kernel(
        arr["terrain"], arr["res_pos"], arr["res_opts"], arr["res_nopt"], arr["spawns"],
        state.res_type, state.res_present, state.regen, state.agents, state.inventories, state.rewards, state.rng,
    )
    return state


def step(state: GridState, actions: Sequence[int], inplace: bool = False):
    """Advance one tick. Returns ``(new_state, (r0, r1), events)``."""
    if state.done:
        raise TerminalStateError(f"episode already ended at tick {state.tick}")
    acts = np.asarray(actions, dtype=np.int64)
    if acts.shape != (2,) or acts.min() < 0 or acts.max() >= K.N_ACTIONS:
        raise ValidationError(f"actions must be two codes in [0, {K.N_ACTIONS}), got {list(actions)}")
    new = state if inplace else state.copy()
    arr = new.scenario.arrays
    rewards = np.zeros(2, dtype=np.float64)
    ev = np.zeros(K.N_EVENTS, dtype=np.int64)
    K.step_kernel(
        arr["terrain"], arr["res_pos"], arr["spawns"], arr["rules"], new.payoff.a_row, _mode_code(new.payoff),
        new.res_type, new.res_present, new.regen, new.agents, new.inventories, new.rewards, new.rng,
        new.tick, acts, rewards, ev,
    )
    new.tick += 1
    step_counter.add(1)
    return new, (float(rewards[0]), float(rewards[1])), _decode_events(ev, rewards)


def _decode_events(ev: np.ndarray, rewards: np.ndarray) -> list[Event]:
    events = []
    for i in range(2):
        if ev[K.E_COLLECT0 + i] >= 0:
            events.append(Event("collect", agent=i, resource_type=int(ev[K.E_COLLECT0 + i])))
    for i in range(2):
        if ev[K.E_FIRED] >> i & 1:
            events.append(Event("beam", agent=i))
    if ev[K.E_INTERACTION] == K.INTERACTION_PAYOFF:
        events.append(Event("interaction", rewards=(float(rewards[0]), float(rewards[1]))))
    elif ev[K.E_INTERACTION] == K.INTERACTION_INERT:
        events.append(Event("inert"))
    for i in range(2):
        if ev[K.E_RESPAWNED] >> i & 1:
            events.append(Event("respawn", agent=i))
    return events


def observe(state: GridState, agent_index: int) -> Observation:
    sc = state.scenario
    window = np.empty((sc.window_size, sc.window_size), dtype=np.int8)
    K.observe_kernel(
        sc.arrays["terrain"], state.res_type, state.res_present, state.agents,
        agent_index, sc.observation_radius, window,
    )
    window.setflags(write=False)
    if state.is_active(agent_index):
        inv = tuple(int(v) for v in state.inventories[agent_index])
    else:
        inv = (0,) * state.payoff.k
    return Observation(window, inv, state.tick, int(state.agents[agent_index, K.A_FACING]))


class EpisodeResult(NamedTuple):
    rewards: tuple[float, float]
    discounted: tuple[float, float]
    steps: int
    interactions: int


def episode_seeds(seed: int) -> tuple[int, int, int]:
    """Environment and per-agent policy stream seeds for one episode."""
    return derive_seed(seed, "env"), derive_seed(seed, "agent", 0), derive_seed(seed, "agent", 1)


def play_episode(
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    params0: np.ndarray,
    params1: np.ndarray,
    seed: int,
    discount: float = 1.0,
    max_steps: int | None = None,
) -> EpisodeResult:
    """Play one episode between two parameter vectors (agent 0 is the ego).

    ``max_steps`` truncates the episode early; the result then covers only
    the simulated prefix.
    """
    arr = scenario.arrays
    length = scenario.episode_length if max_steps is None else min(int(max_steps), scenario.episode_length)
    env_seed, s0, s1 = episode_seeds(seed)
    out = np.zeros(6, dtype=np.float64)
    K.episode_kernel(
        arr["terrain"], arr["res_pos"], arr["res_opts"], arr["res_nopt"], arr["spawns"], arr["rules"],
        payoff.a_row, _mode_code(payoff),
        np.ascontiguousarray(params0, dtype=np.float64), np.ascontiguousarray(params1, dtype=np.float64),
        np.uint64(env_seed), np.uint64(s0), np.uint64(s1), length, float(discount), out,
    )
    step_counter.add(length)
    return EpisodeResult((float(out[0]), float(out[1])), (float(out[2]), float(out[3])), int(out[4]), int(out[5]))
