"""Heuristic policies, checkpoints and checkpoint pools."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientCheckpointsError, OrderingError, ValidationError
from .game import _kernels as K
from .game.engine import Observation, RngStream

MIN_TEMPERATURE = 0.05


@dataclass(frozen=True)
class PolicyParams:
    """Four-knob behaviour family.

    ``resource_weights`` ranks resource types, ``zap_propensity`` is the
    chance of firing when the co-player is in the beam line,
    ``exploration_temperature`` is the softmax temperature over action
    scores, and ``approach_weight`` pulls toward (or pushes away from) a
    visible co-player.
    """

    resource_weights: tuple[float, ...]
    zap_propensity: float
    exploration_temperature: float
    approach_weight: float

    def __post_init__(self):
        object.__setattr__(self, "resource_weights", tuple(float(w) for w in self.resource_weights))
        values = (*self.resource_weights, self.zap_propensity, self.exploration_temperature, self.approach_weight)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("policy parameters must be finite")
        if not 0.0 <= self.zap_propensity <= 1.0:
            raise ValidationError(f"zap_propensity must lie in [0, 1], got {self.zap_propensity}")
        if self.exploration_temperature <= 0:
            raise ValidationError(f"exploration_temperature must be positive, got {self.exploration_temperature}")

    @property
    def k(self) -> int:
        return len(self.resource_weights)

    def vector(self) -> np.ndarray:
        return np.array(
            [*self.resource_weights, self.zap_propensity, self.exploration_temperature, self.approach_weight],
            dtype=np.float64,
        )

    @classmethod
    def from_vector(cls, v: Sequence[float], k: int) -> "PolicyParams":
        v = [float(x) for x in v]
        return cls(tuple(v[:k]), v[k], v[k + 1], v[k + 2])

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> "PolicyParams":
        return cls(
            tuple(rng.uniform(-1.0, 1.0, size=k)),
            float(rng.uniform(0.0, 1.0)),
            float(rng.uniform(0.1, 1.0)),
            float(rng.uniform(-1.0, 1.0)),
        )

    def perturb(self, scale: float, rng: np.random.Generator) -> "PolicyParams":
        """Gaussian perturbation of every field, clipped back into the valid domain."""
        v = self.vector() + scale * rng.standard_normal(self.k + 3)
        v[self.k] = min(max(v[self.k], 0.0), 1.0)
        v[self.k + 1] = max(v[self.k + 1], MIN_TEMPERATURE)
        return PolicyParams.from_vector(v, self.k)

    def to_dict(self) -> dict:
        return {
            "resource_weights": list(self.resource_weights),
            "zap_propensity": self.zap_propensity,
            "exploration_temperature": self.exploration_temperature,
            "approach_weight": self.approach_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyParams":
        return cls(tuple(d["resource_weights"]), d["zap_propensity"], d["exploration_temperature"], d["approach_weight"])


def fingerprint(params: PolicyParams) -> str:
    blob = json.dumps(params.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def act(params: PolicyParams, obs: Observation, rng: RngStream) -> int:
    """Sample an action. All randomness comes from ``rng``."""
    inv = np.asarray(obs.own_inventory, dtype=np.int64)
    if len(inv) != params.k:
        raise ValidationError(f"inventory has {len(inv)} slots but policy expects {params.k}")
    return int(K.act_kernel(params.vector(), obs.window, inv, obs.facing, rng.state))


@dataclass(frozen=True)
class Checkpoint:
    params: PolicyParams
    step_index: int
    run_id: str
    fingerprint: str = ""

    def __post_init__(self):
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", fingerprint(self.params))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "step_index": self.step_index,
            "run_id": self.run_id,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        ckpt = cls(PolicyParams.from_dict(d["params"]), int(d["step_index"]), d["run_id"])
        if d.get("fingerprint") and d["fingerprint"] != ckpt.fingerprint:
            raise ValidationError(f"checkpoint {d['run_id']}@{d['step_index']}: fingerprint mismatch")
        return ckpt


@dataclass(frozen=True)
class CheckpointPool:
    run_id: str
    scenario_id: str
    environment_id: str
    checkpoints: tuple[Checkpoint, ...] = ()
    total_steps: int = 0

    def __len__(self):
        return len(self.checkpoints)

    def __iter__(self):
        return iter(self.checkpoints)

    def __getitem__(self, i):
        return self.checkpoints[i]

    @property
    def latest(self) -> Checkpoint:
        if not self.checkpoints:
            raise InsufficientCheckpointsError(f"pool {self.run_id!r} is empty")
        return self.checkpoints[-1]


def save_checkpoint(pool: CheckpointPool, params: PolicyParams, step_index: int) -> CheckpointPool:
    if pool.checkpoints and step_index <= pool.checkpoints[-1].step_index:
        raise OrderingError(
            f"pool {pool.run_id!r}: step {step_index} is not after last save at {pool.checkpoints[-1].step_index}"
        )
    ckpt = Checkpoint(params, int(step_index), pool.run_id)
    return CheckpointPool(
        pool.run_id, pool.scenario_id, pool.environment_id, pool.checkpoints + (ckpt,), max(pool.total_steps, step_index)
    )


LATE_FRACTION = 0.25


@dataclass(frozen=True)
class SamplingSpec:
    count: int
    stage: str = "all"  # "late" | "all"
    probabilities: tuple[float, ...] | None = None  # over the eligible subset; None = uniform

    def __post_init__(self):
        if self.stage not in ("late", "all"):
            raise ValidationError(f"unknown sampling stage {self.stage!r}")
        if self.count < 1:
            raise ValidationError("sample count must be at least 1")
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=np.float64)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValidationError("sampling probabilities must be non-negative and sum to 1")


def eligible(pool: CheckpointPool, stage: str) -> tuple[Checkpoint, ...]:
    """Checkpoints a stage may draw from; ``late`` keeps the final quarter (rounded up)."""
    if stage == "all":
        return pool.checkpoints
    n_late = math.ceil(len(pool) * LATE_FRACTION)
    return pool.checkpoints[len(pool) - n_late:]


def sample_checkpoints(pool: CheckpointPool, spec: SamplingSpec, rng: np.random.Generator) -> list[Checkpoint]:
    """Draw ``spec.count`` distinct checkpoints, returned in step order."""
    cands = eligible(pool, spec.stage)
    if spec.count > len(cands):
        raise InsufficientCheckpointsError(
            f"pool {pool.run_id!r}: asked for {spec.count} {spec.stage}-stage checkpoints, only {len(cands)} eligible"
        )
    p = None
    if spec.probabilities is not None:
        if len(spec.probabilities) != len(cands):
            raise ValidationError(
                f"{len(spec.probabilities)} sampling probabilities for {len(cands)} eligible checkpoints"
            )
        p = np.asarray(spec.probabilities, dtype=np.float64)
    idx = rng.choice(len(cands), size=spec.count, replace=False, p=p)
    return [cands[i] for i in sorted(idx)]


def save_pool(pool: CheckpointPool, directory: str | Path) -> Path:
    """Write one JSON per checkpoint plus ``pool.json`` (metadata and ordering)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for ckpt in pool.checkpoints:
        name = f"ckpt_{ckpt.step_index:012d}.json"
        (directory / name).write_text(json.dumps(ckpt.to_dict(), indent=1, sort_keys=True) + "\n")
        files.append(name)
    manifest = {
        "run_id": pool.run_id,
        "scenario_id": pool.scenario_id,
        "environment_id": pool.environment_id,
        "total_steps": pool.total_steps,
        "checkpoints": files,
    }
    path = directory / "pool.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_pool(directory: str | Path) -> CheckpointPool:
    directory = Path(directory)
    manifest_path = directory / "pool.json"
    if not manifest_path.exists():
        raise ValidationError(f"{directory} is not a checkpoint pool (missing pool.json)")
    meta = json.loads(manifest_path.read_text())
    pool = CheckpointPool(meta["run_id"], meta["scenario_id"], meta["environment_id"])
    ckpts = []
    for name in meta["checkpoints"]:
        ckpts.append(Checkpoint.from_dict(json.loads((directory / name).read_text())))
    steps = [c.step_index for c in ckpts]
    if steps != sorted(set(steps)):
        raise OrderingError(f"{directory}: checkpoints are not strictly increasing")
    return CheckpointPool(pool.run_id, pool.scenario_id, pool.environment_id, tuple(ckpts), int(meta["total_steps"]))
