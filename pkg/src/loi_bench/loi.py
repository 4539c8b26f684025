"""Level of Influence: conditional mutual information between the ego agent's
episode reward and the co-player's policy choice, estimated from reward
histograms over checkpoint pools. All information quantities are in nats.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompatibleHistogramError, ValidationError
from .game.engine import play_episode
from .game.payoff import PayoffMatrix
from .game.scenario import ScenarioMap
from .policy import Checkpoint, CheckpointPool, SamplingSpec, sample_checkpoints
from .seeding import derive_rng, derive_seed


@dataclass(frozen=True)
class RewardHistogram:
    bin_width: float
    origin: float
    probabilities: Mapping[int, float]  # bin index -> mass, zero-mass bins absent
    sample_count: int

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValidationError("bin_width must be positive")
        probs = {int(b): float(p) for b, p in sorted(self.probabilities.items()) if p > 0}
        if not probs:
            raise ValidationError("histogram has no mass")
        if abs(math.fsum(probs.values()) - 1.0) > 1e-9:
            raise ValidationError("histogram probabilities must sum to 1")
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_samples(cls, rewards: Sequence[float], bin_width: float = 1.0, origin: float = 0.0) -> "RewardHistogram":
        if len(rewards) == 0:
            raise ValidationError("cannot histogram an empty reward set")
        counts: dict[int, int] = {}
        for r in rewards:
            b = bin_index(r, bin_width, origin)
            counts[b] = counts.get(b, 0) + 1
        n = len(rewards)
        return cls(bin_width, origin, {b: c / n for b, c in counts.items()}, n)

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "origin": self.origin,
            "sample_count": self.sample_count,
            "probabilities": {str(b): p for b, p in self.probabilities.items()},
        }


def bin_index(reward: float, bin_width: float, origin: float) -> int:
    return math.floor((reward - origin) / bin_width)


def _check_mixture(conditionals: Sequence[RewardHistogram], weights: Sequence[float]) -> np.ndarray:
    if not conditionals:
        raise ValidationError("need at least one conditional histogram")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(conditionals),):
        raise ValidationError(f"{len(w)} weights for {len(conditionals)} conditionals")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError("mixture weights must be non-negative and sum to 1")
    first = conditionals[0]
    for h in conditionals[1:]:
        if h.bin_width != first.bin_width or h.origin != first.origin:
            raise IncompatibleHistogramError(
                f"binning mismatch: ({h.bin_width}, {h.origin}) vs ({first.bin_width}, {first.origin})"
            )
    return w


def marginal_distribution(conditionals: Sequence[RewardHistogram], weights: Sequence[float]) -> RewardHistogram:
    """Mixture P(r) = sum_theta w[theta] P(r | theta) over the union of supports."""
    w = _check_mixture(conditionals, weights)
    mass: dict[int, list[float]] = {}
    for wt, h in zip(w, conditionals):
        if wt == 0:
            continue
        for b, p in h.probabilities.items():
            mass.setdefault(b, []).append(wt * p)
    probs = {b: math.fsum(parts) for b, parts in mass.items()}
    total = math.fsum(probs.values())
    probs = {b: p / total for b, p in probs.items()}
    first = conditionals[0]
    return RewardHistogram(first.bin_width, first.origin, probs, sum(h.sample_count for h in conditionals))


def mutual_information(conditionals: Sequence[RewardHistogram], weights: Sequence[float]) -> float:
    """sum_theta w[theta] * KL(P(.|theta) || marginal), clamped at zero."""
    w = _check_mixture(conditionals, weights)
    marginal = marginal_distribution(conditionals, w).probabilities
    terms = []
    for wt, h in zip(w, conditionals):
        if wt == 0:
            continue
        for b, p in h.probabilities.items():
            q = marginal[b]
            terms.append(wt * p * math.log(p / q))
    mi = math.fsum(terms)
    if not math.isfinite(mi):
        raise ValidationError("non-finite mutual information")
    if mi < 0:
        if mi < -1e-12:
            raise ValidationError(f"negative mutual information {mi}")
        mi = 0.0
    return mi


@dataclass(frozen=True)
class LoIConfig:
    a: int = 1
    b: int = 5
    m: int = 4
    n: int = 9
    g: int = 6
    alice_stage: str = "late"
    bob_stage: str = "all"
    bin_width: float = 1.0
    origin: float = 0.0
    seed: int = 0
    pool_bobs_across_policies: bool = False

    def __post_init__(self):
        for name in ("a", "b", "m", "n", "g"):
            if getattr(self, name) < 1:
                raise ValidationError(f"LoI parameter {name} must be >= 1")
        if self.bin_width <= 0:
            raise ValidationError("bin_width must be positive")


@dataclass
class LoIEstimate:
    mean: float
    std: float
    samples: list[float]
    provenance: list[tuple[int, int, int]]  # (i, j, k) per sample; j = -1 when Bobs are pooled
    config: LoIConfig
    histograms: dict | None = field(default=None)

    def to_dict(self, include_histograms: bool = False) -> dict:
        d = {
            "config": asdict(self.config),
            "mean": self.mean,
            "std": self.std,
            "samples": [
                {"i": i, "j": j, "k": k, "mi": v} for v, (i, j, k) in zip(self.samples, self.provenance)
            ],
        }
        if include_histograms and self.histograms is not None:
            d["histograms"] = self.histograms
        return d

    def write(self, path: str | Path, include_histograms: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(include_histograms), indent=1, sort_keys=True) + "\n")
        return path


def play_rewards(alice: Checkpoint, bob: Checkpoint, scenario, payoff, g: int, seed: int) -> list[float]:
    """Alice's total episode reward over ``g`` seeded games (Alice is agent 0)."""
    va = alice.params.vector()
    vb = bob.params.vector()
    return [play_episode(scenario, payoff, va, vb, derive_seed(seed, "game", t)).rewards[0] for t in range(g)]


def reward_distribution(
    alice: Checkpoint,
    bob: Checkpoint,
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    g: int,
    bin_width: float = 1.0,
    seed: int = 0,
    origin: float = 0.0,
) -> RewardHistogram:
    if g < 1:
        raise ValidationError("game count g must be >= 1")
    return RewardHistogram.from_samples(play_rewards(alice, bob, scenario, payoff, g, seed), bin_width, origin)


def estimate_loi(
    pools_alice: Sequence[CheckpointPool],
    pools_bob: Sequence[CheckpointPool],
    config: LoIConfig,
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    keep_histograms: bool = False,
) -> LoIEstimate:
    """Nested sampling over Alice and Bob checkpoints, one MI value per (i, k, j)."""
    if len(pools_alice) != config.a or len(pools_bob) != config.b:
        raise ValidationError(
            f"expected {config.a} Alice and {config.b} Bob pools, got {len(pools_alice)} and {len(pools_bob)}"
        )
    alice_spec = SamplingSpec(config.m, config.alice_stage)
    bob_spec = SamplingSpec(config.n, config.bob_stage)
    samples, provenance = [], []
    dumps = {} if keep_histograms else None

    def conditional(i, k, j, l, alice, bob):
        seed = derive_seed(config.seed, "games", i, k, j, l)
        h = reward_distribution(alice, bob, scenario, payoff, config.g, config.bin_width, seed, config.origin)
        if dumps is not None:
            dumps[f"{i}/{k}/{j}/{l}"] = {"alice": alice.fingerprint, "bob": bob.fingerprint, **h.to_dict()}
        return h

    for i, pool_a in enumerate(pools_alice):
        alices = sample_checkpoints(pool_a, alice_spec, derive_rng(config.seed, "alice", i))
        for k, alice in enumerate(alices):
            if config.pool_bobs_across_policies:
                hists = []
                for j, pool_b in enumerate(pools_bob):
                    bobs = sample_checkpoints(pool_b, bob_spec, derive_rng(config.seed, "bob", i, k, j))
                    hists += [conditional(i, k, j, l, alice, bob) for l, bob in enumerate(bobs)]
                samples.append(mutual_information(hists, np.full(len(hists), 1.0 / len(hists))))
                provenance.append((i, -1, k))
                continue
            for j, pool_b in enumerate(pools_bob):
                bobs = sample_checkpoints(pool_b, bob_spec, derive_rng(config.seed, "bob", i, k, j))
                hists = [conditional(i, k, j, l, alice, bob) for l, bob in enumerate(bobs)]
                samples.append(mutual_information(hists, np.full(len(hists), 1.0 / len(hists))))
                provenance.append((i, j, k))
    arr = np.array(samples, dtype=np.float64)
    return LoIEstimate(float(arr.mean()), float(arr.std(ddof=0)), samples, provenance, config, dumps)


@dataclass
class VarianceStudy:
    """LoI means per repeat and their sample variance (ddof=1), keyed by Bob count."""

    means: dict[int, list[float]]
    variances: dict[int, float]

    def rows(self) -> list[dict]:
        return [
            {"b": b, "repeats": len(self.means[b]), "mean_loi": float(np.mean(self.means[b])), "variance": v}
            for b, v in sorted(self.variances.items())
        ]


def loi_variance_study(
    bob_pool_counts: Sequence[int],
    repeats: int,
    base: LoIConfig,
    scenario: ScenarioMap,
    payoff: PayoffMatrix,
    training,
    seed: int = 0,
    identical_seeds: bool = False,
) -> VarianceStudy:
    """Repeat LoI estimation on freshly trained self-play pool sets for each Bob count.

    ``training`` is a TrainingConfig template; its seed and run name are
    replaced per trained pool. ``identical_seeds`` reuses repeat 0's seeds for
    every repeat (a degenerate check that should give zero variance).
    """
    from dataclasses import replace

    from .trainer import train_self_play

    if repeats < 2:
        raise ValidationError("variance study needs at least 2 repeats")
    means: dict[int, list[float]] = {}
    for b in bob_pool_counts:
        means[b] = []
        for r in range(repeats):
            rr = 0 if identical_seeds else r
            pools = []
            for idx in range(base.a + b):
                cfg = replace(
                    training,
                    population_size=1,
                    seed=derive_seed(seed, "variance", b, rr, idx),
                    run_name=f"var-b{b}-r{rr}-{idx}",
                )
                pools.append(train_self_play(cfg, scenario, payoff).pools[0])
            cfg = replace(base, b=b, seed=derive_seed(seed, "variance-loi", b, rr))
            est = estimate_loi(pools[: base.a], pools[base.a:], cfg, scenario, payoff)
            means[b].append(est.mean)
    variances = {b: float(np.var(v, ddof=1)) for b, v in means.items()}
    return VarianceStudy(means, variances)
