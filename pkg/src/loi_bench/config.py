"""Experiment configuration: a YAML document with full-scale defaults.

Step counts are written at full scale and multiplied by ``scale`` (1/100 by
default), so ``training.loi_steps: 5000000`` becomes 50K desk-scale steps.

Schema (every key optional)::

    seed: 0                      # root seed; all other seeds derive from it
    output_dir: runs/desk
    scale: 1/100                 # float or "a/b"
    replicates: 1                # independent seed replicates per cell
    jobs: 1
    episode_length: 200          # overrides every map's episode length; null keeps the map's
    environments:                # list of built-in names, or name -> {row_payoff, mode}
      - chicken
    scenarios:                   # list of built-in names, or name -> map file path
      - small
    training:   {loi_steps, eval_steps, save_interval, mutation_scale, episodes_per_eval, discount_factor}
    loi:        {a, b, m, n, g, bin_width, origin, alice_stage, bob_stage}
    evaluation: {fractions, games_per_pair}
    allocation: {base_unit}
    variance:   {environment, scenario, bob_counts, repeats}   # null skips the study
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigurationError, LoIBenchError
from .evaluation import DEFAULT_FRACTIONS
from .game.payoff import ENVIRONMENTS, PayoffMatrix
from .game.scenario import BUILTIN_SCENARIOS, ScenarioMap, builtin_map_text, load_scenario
from .loi import LoIConfig

DEFAULT_SCALE = Fraction(1, 100)
DESK_EPISODE_LENGTH = 200


def parse_scale(value: Any) -> Fraction:
    try:
        scale = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"bad scale {value!r}; use a number or a/b") from exc
    if not 0 < scale <= 1:
        raise ConfigurationError(f"scale must lie in (0, 1], got {value!r}")
    return scale


@dataclass(frozen=True)
class TrainingDefaults:
    loi_steps: int = 5_000_000
    eval_steps: int = 10_000_000
    save_interval: int = 200_000
    mutation_scale: float = 0.1
    episodes_per_eval: int = 1
    discount_factor: float = 1.0


@dataclass(frozen=True)
class EvaluationDefaults:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    games_per_pair: int = 10


@dataclass(frozen=True)
class VarianceDefaults:
    environment: str = "chicken"
    scenario: str = "small"
    bob_counts: tuple[int, ...] = (1, 2, 3, 4)
    repeats: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    environments: dict[str, PayoffMatrix]
    scenario_sources: dict[str, str | None]  # name -> map file path, None for a built-in map
    training: TrainingDefaults = TrainingDefaults()
    loi: LoIConfig = LoIConfig()
    evaluation: EvaluationDefaults = EvaluationDefaults()
    base_unit: int = 10_000_000
    seed: int = 0
    output_dir: str = "runs/desk"
    scale: Fraction = DEFAULT_SCALE
    replicates: int = 1
    jobs: int = 1
    episode_length: int | None = DESK_EPISODE_LENGTH
    variance: VarianceDefaults | None = VarianceDefaults()
    _scenarios: dict[str, ScenarioMap] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.environments:
            raise ConfigurationError("config lists no environments")
        if len(self.scenario_sources) < 1:
            raise ConfigurationError("config lists no scenarios")
        if self.replicates < 1 or self.jobs < 1:
            raise ConfigurationError("replicates and jobs must be >= 1")
        if self.episode_length is not None and self.episode_length < 1:
            raise ConfigurationError("episode_length must be >= 1")
        if self.variance is not None:
            if self.variance.environment not in self.environments or self.variance.scenario not in self.scenario_sources:
                # default study cell falls back to the first configured environment/scenario
                if self.variance == VarianceDefaults():
                    object.__setattr__(self, "variance", replace(
                        self.variance, environment=next(iter(self.environments)),
                        scenario=next(iter(self.scenario_sources))))
            if self.variance.environment not in self.environments:
                raise ConfigurationError(f"variance environment {self.variance.environment!r} is not configured")
            if self.variance.scenario not in self.scenario_sources:
                raise ConfigurationError(f"variance scenario {self.variance.scenario!r} is not configured")
        # parse every map eagerly so a broken reference fails before any work starts
        for name in self.scenario_sources:
            for payoff in self.environments.values():
                self.scenario(name, payoff)

    def scaled(self, full_steps: int) -> int:
        return max(1, int(round(full_steps * self.scale)))

    @property
    def loi_steps(self) -> int:
        return self.scaled(self.training.loi_steps)

    @property
    def eval_steps(self) -> int:
        return self.scaled(self.training.eval_steps)

    @property
    def save_interval(self) -> int:
        return self.scaled(self.training.save_interval)

    @property
    def scaled_base_unit(self) -> int:
        return self.scaled(self.base_unit)

    @property
    def scenario_names(self) -> list[str]:
        return list(self.scenario_sources)

    def scenario(self, name: str, payoff: PayoffMatrix) -> ScenarioMap:
        if name not in self.scenario_sources:
            raise ConfigurationError(f"unknown scenario {name!r}; known scenarios: {', '.join(self.scenario_sources)}")
        key = f"{name}/{payoff.name}"
        if key not in self._scenarios:
            source = self.scenario_sources[name]
            if source is None:
                text = builtin_map_text(name)
            else:
                path = Path(source)
                if not path.is_file():
                    raise ConfigurationError(f"scenario {name!r}: map file {source} does not exist")
                text = path.read_text()
            try:
                scen = load_scenario(text, payoff, name=name)
            except LoIBenchError as exc:
                raise ConfigurationError(f"scenario {name!r}: {exc}") from exc
            if self.episode_length is not None:
                scen = scen.with_rules(episode_length=self.episode_length)
            self._scenarios[key] = scen
        return self._scenarios[key]

    def payoff(self, name: str) -> PayoffMatrix:
        if name not in self.environments:
            raise ConfigurationError(f"unknown environment {name!r}; known: {', '.join(self.environments)}")
        return self.environments[name]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "scale" in kw:
            kw["scale"] = parse_scale(kw["scale"])
        return replace(self, _scenarios={}, **kw) if kw else self

    def echo(self) -> dict:
        """Plain-data view of the config; ``output_dir`` is left out so it never affects manifests."""
        return {
            "environments": {
                n: {"row_payoff": [list(r) for r in p.row_payoff], "mode": p.mode} for n, p in self.environments.items()
            },
            "scenarios": dict(self.scenario_sources),
            "training": asdict(self.training),
            "loi": asdict(self.loi),
            "evaluation": {**asdict(self.evaluation), "fractions": list(self.evaluation.fractions)},
            "allocation": {"base_unit": self.base_unit},
            "seed": self.seed,
            "scale": str(self.scale),
            "replicates": self.replicates,
            "episode_length": self.episode_length,
            "variance": None if self.variance is None else {
                **asdict(self.variance), "bob_counts": list(self.variance.bob_counts)
            },
        }


def _section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"section {name!r}: unknown keys {sorted(unknown)}; allowed {sorted(known)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**data)
    except LoIBenchError as exc:
        raise ConfigurationError(f"section {name!r}: {exc}") from exc
    except TypeError as exc:
        raise ConfigurationError(f"section {name!r}: {exc}") from exc


def _environments(data: Any) -> dict[str, PayoffMatrix]:
    if data is None:
        return dict(ENVIRONMENTS)
    out = {}
    if isinstance(data, list):
        for name in data:
            if name not in ENVIRONMENTS:
                raise ConfigurationError(f"unknown environment {name!r}; known: {', '.join(ENVIRONMENTS)}")
            out[name] = ENVIRONMENTS[name]
        return out
    if not isinstance(data, Mapping):
        raise ConfigurationError("environments must be a list or a mapping")
    for name, spec in data.items():
        if spec is None:
            if name not in ENVIRONMENTS:
                raise ConfigurationError(f"environment {name!r} needs a row_payoff")
            out[name] = ENVIRONMENTS[name]
            continue
        try:
            out[name] = PayoffMatrix(name, tuple(tuple(r) for r in spec["row_payoff"]), spec.get("mode", "mixed"))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"environment {name!r}: expected {{row_payoff, mode}}") from exc
        except LoIBenchError as exc:
            raise ConfigurationError(str(exc)) from exc
    return out


def _scenarios(data: Any, base: Path) -> dict[str, str | None]:
    if data is None:
        return {s: None for s in BUILTIN_SCENARIOS}
    if isinstance(data, list):
        for name in data:
            if name not in BUILTIN_SCENARIOS:
                raise ConfigurationError(f"unknown scenario {name!r}; known scenarios: {', '.join(BUILTIN_SCENARIOS)}")
        return {s: None for s in data}
    if not isinstance(data, Mapping):
        raise ConfigurationError("scenarios must be a list or a mapping")
    out = {}
    for name, path in data.items():
        if path is None:
            if name not in BUILTIN_SCENARIOS:
                raise ConfigurationError(f"unknown scenario {name!r}; known scenarios: {', '.join(BUILTIN_SCENARIOS)}")
            out[name] = None
        else:
            p = Path(path)
            out[name] = str(p if p.is_absolute() else base / p)
    return out


def config_from_dict(data: Mapping | None, base_dir: str | Path = ".") -> ExperimentConfig:
    data = dict(data or {})
    known = {
        "environments", "scenarios", "training", "loi", "evaluation", "allocation", "seed", "output_dir",
        "scale", "replicates", "jobs", "episode_length", "variance",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    alloc = data.get("allocation") or {}
    if set(alloc) - {"base_unit"}:
        raise ConfigurationError("section 'allocation' only accepts base_unit")
    # an absent section runs the study with defaults; an explicit null skips it
    variance = data["variance"] if "variance" in data else {}
    return ExperimentConfig(
        environments=_environments(data.get("environments")),
        scenario_sources=_scenarios(data.get("scenarios"), Path(base_dir)),
        training=_section(TrainingDefaults, data.get("training"), "training"),
        loi=_section(LoIConfig, data.get("loi"), "loi"),
        evaluation=_section(EvaluationDefaults, data.get("evaluation"), "evaluation"),
        base_unit=int(alloc.get("base_unit", 10_000_000)),
        seed=int(data.get("seed", 0)),
        output_dir=str(data.get("output_dir", "runs/desk")),
        scale=parse_scale(data.get("scale", DEFAULT_SCALE)),
        replicates=int(data.get("replicates", 1)),
        jobs=int(data.get("jobs", 1)),
        episode_length=data.get("episode_length", DESK_EPISODE_LENGTH),
        variance=None if variance is None else _section(VarianceDefaults, variance, "variance"),
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return config_from_dict({})
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if data is not None and not isinstance(data, Mapping):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return config_from_dict(data, path.parent)
