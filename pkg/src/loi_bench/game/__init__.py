from .engine import (
    ACTION_NAMES, FIRE, MOVE_E, MOVE_N, MOVE_S, MOVE_W, NOOP, TURN_LEFT, TURN_RIGHT,
    EpisodeResult, Event, GridState, Observation, RngStream, observe, play_episode, reset, step, step_counter,
)
from .payoff import CHICKEN, ENVIRONMENTS, PURE_COORDINATION, PRISONERS_DILEMMA, STAG_HUNT, PayoffMatrix, resolve_interaction
from .scenario import BUILTIN_SCENARIOS, ScenarioMap, builtin_scenario, load_scenario, parse_map
