"""LoI-guided training-budget allocation across scenarios."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InfeasiblePlanError, ValidationError

METHOD_UNITS = {"sp": 1, "pp3": 3, "pp5": 5}
METHOD_POPULATION = {"sp": 1, "pp3": 3, "pp5": 5}


@dataclass
class AllocationPlan:
    scenarios: tuple[str, ...]
    lois: tuple[float, ...]
    methods: dict[str, str]
    steps: dict[str, int]
    base_unit: int
    thresholds: tuple[float, float]
    adjustments: list[tuple[str, str]] = field(default_factory=list)  # ("upgraded" | "downgraded", scenario)

    @property
    def total_steps(self) -> int:
        return sum(self.steps.values())

    @property
    def adjustment_applied(self) -> str:
        if not self.adjustments:
            return "none"
        return ", ".join(f"{kind}({name})" for kind, name in self.adjustments)

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "lois": list(self.lois),
            "methods": self.methods,
            "steps": self.steps,
            "base_unit": self.base_unit,
            "total_steps": self.total_steps,
            "thresholds": {"lower": self.thresholds[0], "upper": self.thresholds[1]},
            "adjustment_applied": self.adjustment_applied,
        }


def uniform_plan(scenarios: Sequence[str], base_unit: int) -> dict[str, str]:
    return {s: "pp3" for s in scenarios}


def allocate(
    lois: Sequence[float] | Mapping[str, float],
    base_unit: int,
    scenario_order: Sequence[str] | None = None,
) -> AllocationPlan:
    """Threshold each scenario's LoI at mean +/- population std, then rebalance.

    Below the band -> SP, above -> PP5, inside -> PP3. Each SP frees the
    budget of one PP5; any imbalance is repaired one PP3 scenario at a time,
    upgrading the highest-LoI or downgrading the lowest-LoI PP3 scenario.
    Ties go to the scenario declared last.
    """
    if isinstance(lois, Mapping):
        order = list(scenario_order) if scenario_order is not None else list(lois)
        values = [float(lois[s]) for s in order]
    else:
        values = [float(v) for v in lois]
        order = list(scenario_order) if scenario_order is not None else [f"scenario{i}" for i in range(len(values))]
    if len(order) != len(values):
        raise ValidationError(f"{len(values)} LoI values for {len(order)} scenarios")
    if len(set(order)) != len(order):
        raise ValidationError("duplicate scenario names")
    if len(values) < 2:
        raise ValidationError(f"allocation needs at least 2 scenarios, got {len(values)}")
    if base_unit <= 0:
        raise ValidationError("base_unit must be positive")
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("LoI values must be finite")

    mean = math.fsum(values) / len(values)
    sigma = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))
    lower, upper = mean - sigma, mean + sigma
    methods = {}
    c = 0
    for name, v in zip(order, values):
        if v < lower:
            methods[name] = "sp"
            c += 1
        elif v > upper:
            methods[name] = "pp5"
            c -= 1
        else:
            methods[name] = "pp3"

    adjustments = []
    while c != 0:
        pp3 = [(v, i) for i, (name, v) in enumerate(zip(order, values)) if methods[name] == "pp3"]
        if not pp3:
            raise InfeasiblePlanError(f"budget imbalance {c} but no PP3 scenario left to adjust")
        if c > 0:
            _, i = max(pp3)
            methods[order[i]] = "pp5"
            adjustments.append(("upgraded", order[i]))
            c -= 1
        else:
            # lowest LoI; among ties the largest index wins
            _, i = min(pp3, key=lambda t: (t[0], -t[1]))
            methods[order[i]] = "sp"
            adjustments.append(("downgraded", order[i]))
            c += 1

    steps = {name: METHOD_UNITS[methods[name]] * base_unit for name in order}
    return AllocationPlan(tuple(order), tuple(values), methods, steps, base_unit, (lower, upper), adjustments)


def write_allocation(plans: Mapping[str, AllocationPlan], directory: str | Path, stem: str = "allocation") -> dict:
    """JSON of every plan plus a scenario x environment CSV grid of step counts."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    jp = directory / f"{stem}.json"
    jp.write_text(json.dumps({env: p.to_dict() for env, p in plans.items()}, indent=1, sort_keys=True) + "\n")
    cp = directory / f"{stem}.csv"
    envs = list(plans)
    scenarios: list[str] = []
    for p in plans.values():
        scenarios += [s for s in p.scenarios if s not in scenarios]
    with cp.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", *envs])
        for s in scenarios:
            w.writerow([s, *[plans[e].steps.get(s, "") for e in envs]])
        w.writerow(["total", *[plans[e].total_steps for e in envs]])
    return {"json": jp, "csv": cp}
