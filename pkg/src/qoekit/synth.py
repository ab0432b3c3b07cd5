"""Synthetic rater populations with a known ground-truth utility.

Gives every downstream stage (cleaning, analysis, prediction) an oracle
to validate against at desk scale: honest raters score a weighted
utility of the five parameters through per-rater bias, scale, and
noise; adversarial raters score at random or inverted.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DomainError
from .model import (CATEGORIES, ConditionId, DIMENSIONS, Grid, RaterProfile,
                    RatingRecord, to_feature_vector)

# Default utility weights over (density, accuracy, speed, pause_pos,
# pause_dur): accuracy dominates, speed is the second-strongest factor,
# and the signs make slower/longer-pausing streams worse. Magnitudes are
# sized so each dimension's scores spread over most of the 1..5 scale,
# keeping honest raters clear of the |z| <= 2 screening bound.
DEFAULT_WEIGHTS = (0.35, 2.4, -27.0, -0.35, -0.5)

_EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)

_MBTI_CODES = ["".join(p) for p in itertools.product("EI", "SN", "TF", "JP")]

# Which features feed each rating dimension's utility.
_DIMENSION_FEATURES = {
    "overall": (0, 1, 2, 3, 4),
    "content": (0, 1),
    "response": (2, 3, 4),
}


@dataclass(frozen=True)
class SyntheticWorld:
    """Generation parameters; identical (world, seed) output is byte-identical."""

    weights: tuple[float, float, float, float, float] = DEFAULT_WEIGHTS
    noise_sd: float = 0.3
    bias_sd: float = 0.15
    scale_jitter: float = 0.05
    adversarial_random: int = 1
    adversarial_inverted: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise DomainError("noise_sd must be >= 0", code="bad-world")
        if len(self.weights) != 5:
            raise DomainError("weights must cover all five features", code="bad-world")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def dimension_weights(self, dimension: str) -> np.ndarray:
        w = np.zeros(5)
        for i in _DIMENSION_FEATURES[dimension]:
            w[i] = self.weights[i]
        return w

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "noise_sd": self.noise_sd,
            "bias_sd": self.bias_sd,
            "scale_jitter": self.scale_jitter,
            "adversarial_random": self.adversarial_random,
            "adversarial_inverted": self.adversarial_inverted,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticWorld":
        return cls(
            weights=tuple(d.get("weights", DEFAULT_WEIGHTS)),
            noise_sd=float(d.get("noise_sd", 0.3)),
            bias_sd=float(d.get("bias_sd", 0.15)),
            scale_jitter=float(d.get("scale_jitter", 0.05)),
            adversarial_random=int(d.get("adversarial_random", 1)),
            adversarial_inverted=int(d.get("adversarial_inverted", 0)),
            seed=int(d.get("seed", 0)),
        )


def load_world(path: str | Path) -> SyntheticWorld:
    return SyntheticWorld.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class WorldTruth:
    """Ground truth recorded alongside a generated store."""

    conditions: list[ConditionId]
    utilities: dict[ConditionId, dict[str, float]]
    adversarial: set[str]
    rater_bias: dict[str, float] = field(default_factory=dict)
    rater_scale: dict[str, float] = field(default_factory=dict)

    def overall_utility(self, condition: ConditionId) -> float:
        return self.utilities[condition]["overall"]

    def to_dict(self) -> dict:
        return {
            "conditions": [list(c.as_key()) for c in self.conditions],
            "utilities": [
                {"condition": list(c.as_key()), **self.utilities[c]}
                for c in self.conditions
            ],
            "adversarial": sorted(self.adversarial),
            "rater_bias": {k: self.rater_bias[k] for k in sorted(self.rater_bias)},
            "rater_scale": {k: self.rater_scale[k] for k in sorted(self.rater_scale)},
        }


def _make_conditions(grid: Grid, n_conditions: int,
                     rng: np.random.Generator,
                     combos_per_question: int = 4) -> list[ConditionId]:
    combos = grid.combos()
    order = rng.permutation(len(combos))
    conditions = []
    for k in range(n_conditions):
        content, qos = combos[order[k % len(combos)]]
        qidx = k // combos_per_question
        conditions.append(ConditionId(f"q{qidx:03d}", content, qos))
    return conditions


def generate(world: SyntheticWorld, grid: Grid, n_raters: int,
             n_conditions: int) -> tuple[list[RatingRecord], WorldTruth]:
    """Produce a full synthetic ratings store plus its ground truth.

    Every rater scores every condition once. Honest rater r scores
    condition x per dimension as round(clamp(scale_r * (u(x) + bias_r
    + noise), 1, 5)); utilities are centered at 3 over the generated
    condition set. The last ``adversarial_random`` + ``adversarial_inverted``
    raters score uniformly at random / inverted instead.
    """
    if n_raters < 1:
        raise DomainError("need at least one rater", code="bad-world")
    n_adv = world.adversarial_random + world.adversarial_inverted
    if n_adv > n_raters:
        raise DomainError("more adversarial raters than raters", code="bad-world")

    rng = np.random.default_rng(world.seed)
    conditions = _make_conditions(grid, n_conditions, rng)
    category_of = {c.question_id: CATEGORIES[int(c.question_id[1:]) % len(CATEGORIES)]
                   for c in conditions}

    features = np.array([to_feature_vector(c.content, c.qos).values for c in conditions])
    center = features.mean(axis=0)
    utility = np.empty((len(conditions), len(DIMENSIONS)))
    for j, dim in enumerate(DIMENSIONS):
        w = world.dimension_weights(dim)
        utility[:, j] = 3.0 + (features - center) @ w

    truth = WorldTruth(
        conditions=conditions,
        utilities={c: {dim: float(utility[i, j]) for j, dim in enumerate(DIMENSIONS)}
                   for i, c in enumerate(conditions)},
        adversarial=set(),
    )

    records: list[RatingRecord] = []
    stamp = 0
    for r in range(n_raters):
        rater_id = f"r{r:03d}"
        bias = float(rng.normal(0.0, world.bias_sd))
        scale = float(1.0 + rng.uniform(-world.scale_jitter, world.scale_jitter))
        truth.rater_bias[rater_id] = bias
        truth.rater_scale[rater_id] = scale

        is_random = r >= n_raters - n_adv and r < n_raters - world.adversarial_inverted
        is_inverted = r >= n_raters - world.adversarial_inverted
        noise = rng.normal(0.0, world.noise_sd, size=utility.shape)
        if is_random:
            scores = rng.integers(1, 6, size=utility.shape)
            truth.adversarial.add(rater_id)
        else:
            scores = np.round(np.clip(scale * (utility + bias + noise), 1, 5)).astype(int)
            if is_inverted:
                scores = 6 - scores
                truth.adversarial.add(rater_id)

        for i, cond in enumerate(conditions):
            records.append(RatingRecord(
                session_id=f"synth-{rater_id}",
                rater_id=rater_id,
                question_id=cond.question_id,
                category=category_of[cond.question_id],
                content=cond.content,
                qos=cond.qos,
                scores={dim: int(scores[i, j]) for j, dim in enumerate(DIMENSIONS)},
                timestamp=_EPOCH + timedelta(milliseconds=stamp),
            ))
            stamp += 1
    return records, truth


def make_profiles(world: SyntheticWorld, n_raters: int) -> dict[str, RaterProfile]:
    """Deterministic rater profiles with randomly assigned MBTI labels."""
    rng = np.random.default_rng(world.seed + 1)
    profiles = {}
    for r in range(n_raters):
        rater_id = f"r{r:03d}"
        profiles[rater_id] = RaterProfile(
            rater_id=rater_id,
            language="en",
            mbti=_MBTI_CODES[int(rng.integers(0, len(_MBTI_CODES)))],
            patience=int(rng.integers(1, 6)),
            sessions_completed=0,
        )
    return profiles
