"""ASCII scenario maps.

Map documents are a few optional header lines followed by the grid, one
character per cell::

    name = small
    size = 6x6
    random a = {0,1}
    *.0a.*
    ...

Legend: ``#`` wall, ``.`` floor, ``*`` spawn spot, ``0``-``9`` fixed resource
of that type, ``a``-``j`` random resource whose type set is declared by a
``random`` header. ``size`` is ``<width>x<height>``. Any other ``key = value``
header overrides a rule field (``episode_length``, ``respawn_delay`` ...).
The grid is bounded: stepping off the edge is blocked, and the observation
window pads outside cells as walls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Mapping

import numpy as np

from ..errors import ConfigurationError, MapParseError, ValidationError
from .payoff import PayoffMatrix

FLOOR, WALL, SPAWN = 0, 1, 2

_RANDOM_RE = re.compile(r"^\s*random\s+([a-j])\s*=\s*\{([^}]*)\}\s*$")
_KV_RE = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*(\S+)\s*$")
_SIZE_RE = re.compile(r"^(\d+)x(\d+)$")

_INT_RULES = ("observation_radius", "episode_length", "respawn_delay", "regen_delay", "beam_range", "beam_cooldown")


@dataclass(frozen=True, eq=False)
class ScenarioMap:
    name: str
    rows: tuple[str, ...]
    random_sets: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    observation_radius: int = 2
    episode_length: int = 2000
    respawn_delay: int = 5
    regen_delay: int = 10
    beam_range: int = 3
    beam_cooldown: int = 5

    def __post_init__(self):
        if not self.rows:
            raise ValidationError(f"scenario {self.name!r}: empty grid")
        width = len(self.rows[0])
        for r, line in enumerate(self.rows):
            if len(line) != width:
                raise MapParseError(f"row length {len(line)} differs from width {width}", r, min(len(line), width))
            for c, ch in enumerate(line):
                if ch in "#.*" or ch.isdigit():
                    continue
                if "a" <= ch <= "j":
                    if ch not in self.random_sets:
                        raise MapParseError(f"random cell {ch!r} has no declared type set", r, c)
                    continue
                raise MapParseError(f"unknown map character {ch!r}", r, c)
        for letter, types in self.random_sets.items():
            if not types:
                raise ValidationError(f"scenario {self.name!r}: random set {letter!r} is empty")
        if len(self.spawn_spots) < 2:
            raise ValidationError(f"scenario {self.name!r}: need at least 2 spawn spots, found {len(self.spawn_spots)}")
        for name in _INT_RULES:
            if getattr(self, name) < (0 if name == "beam_cooldown" else 1):
                raise ValidationError(f"scenario {self.name!r}: invalid {name}={getattr(self, name)}")

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def window_size(self) -> int:
        return 2 * self.observation_radius + 1

    @cached_property
    def spawn_spots(self) -> tuple[tuple[int, int], ...]:
        return tuple((r, c) for r, line in enumerate(self.rows) for c, ch in enumerate(line) if ch == "*")

    @cached_property
    def resource_cells(self) -> tuple[tuple[int, int, tuple[int, ...]], ...]:
        """(row, col, candidate types) for every resource cell in row-major order."""
        cells = []
        for r, line in enumerate(self.rows):
            for c, ch in enumerate(line):
                if ch.isdigit():
                    cells.append((r, c, (int(ch),)))
                elif "a" <= ch <= "j":
                    cells.append((r, c, tuple(self.random_sets[ch])))
        return tuple(cells)

    def max_resource_type(self) -> int:
        return max((t for _, _, ts in self.resource_cells for t in ts), default=-1)

    def check_payoff(self, payoff: PayoffMatrix) -> None:
        top = self.max_resource_type()
        if top >= payoff.k:
            for r, c, ts in self.resource_cells:
                if max(ts) >= payoff.k:
                    raise ValidationError(
                        f"scenario {self.name!r}: resource type {max(ts)} at row {r}, column {c} "
                        f"is out of range for {payoff.name!r} (k={payoff.k})"
                    )

    def with_rules(self, **overrides) -> "ScenarioMap":
        return replace(self, **overrides)

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Packed arrays consumed by the compiled engine."""
        terrain = np.zeros((self.height, self.width), dtype=np.int8)
        for r, line in enumerate(self.rows):
            for c, ch in enumerate(line):
                terrain[r, c] = WALL if ch == "#" else SPAWN if ch == "*" else FLOOR
        cells = self.resource_cells
        width = max((len(ts) for _, _, ts in cells), default=1)
        res_pos = np.zeros((len(cells), 2), dtype=np.int64)
        res_opts = np.full((len(cells), width), -1, dtype=np.int64)
        res_nopt = np.zeros(len(cells), dtype=np.int64)
        for i, (r, c, ts) in enumerate(cells):
            res_pos[i] = (r, c)
            res_opts[i, : len(ts)] = ts
            res_nopt[i] = len(ts)
        spawns = np.array(self.spawn_spots, dtype=np.int64).reshape(-1, 2)
        rules = np.array(
            [self.observation_radius, self.respawn_delay, self.regen_delay, self.beam_range, self.beam_cooldown],
            dtype=np.int64,
        )
        for a in (terrain, res_pos, res_opts, res_nopt, spawns, rules):
            a.setflags(write=False)
        return {
            "terrain": terrain,
            "res_pos": res_pos,
            "res_opts": res_opts,
            "res_nopt": res_nopt,
            "spawns": spawns,
            "rules": rules,
        }


def parse_map(map_text: str, name: str | None = None) -> ScenarioMap:
    """Parse a map document into a ScenarioMap (payoff compatibility not checked)."""
    lines = map_text.splitlines()
    random_sets: dict[str, tuple[int, ...]] = {}
    rules: dict[str, int] = {}
    declared_size = None
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        m = _RANDOM_RE.match(line)
        if m:
            body = m.group(2).strip()
            try:
                types = tuple(sorted({int(t) for t in body.split(",") if t.strip()}))
            except ValueError:
                raise MapParseError(f"bad type set {body!r}", i, 0) from None
            random_sets[m.group(1)] = types
            i += 1
            continue
        m = _KV_RE.match(line)
        if m:
            key, value = m.groups()
            if key == "name":
                name = name or value
            elif key == "size":
                sm = _SIZE_RE.match(value)
                if not sm:
                    raise MapParseError(f"bad size {value!r}, expected <width>x<height>", i, 0)
                declared_size = (int(sm.group(1)), int(sm.group(2)))
            elif key in _INT_RULES:
                rules[key] = int(value)
            else:
                raise MapParseError(f"unknown header key {key!r}", i, 0)
            i += 1
            continue
        break
    grid = [ln.rstrip("\r") for ln in lines[i:]]
    while grid and not grid[-1].strip():
        grid.pop()
    scenario = ScenarioMap(name=name or "unnamed", rows=tuple(grid), random_sets=random_sets, **rules)
    if declared_size is not None and declared_size != (scenario.width, scenario.height):
        raise ValidationError(
            f"scenario {scenario.name!r}: declared size {declared_size[0]}x{declared_size[1]} "
            f"but grid is {scenario.width}x{scenario.height}"
        )
    return scenario


def load_scenario(map_text: str, payoff: PayoffMatrix, name: str | None = None) -> ScenarioMap:
    scenario = parse_map(map_text, name=name)
    scenario.check_payoff(payoff)
    return scenario


BUILTIN_SCENARIOS = ("small", "medium", "large", "obstacle")


def builtin_map_text(name: str) -> str:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; known scenarios: {', '.join(BUILTIN_SCENARIOS)}")
    return resources.files(__package__).joinpath("maps", f"{name}.txt").read_text()


def builtin_scenario(name: str, payoff: PayoffMatrix | None = None) -> ScenarioMap:
    text = builtin_map_text(name)
    return parse_map(text) if payoff is None else load_scenario(text, payoff)
