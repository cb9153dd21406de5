"""Three-stage probabilistic model selection, plus deterministic baselines.

Stage 1 picks the most accurate base model whose latency profile fits the
budget range: mean + std strictly below the upper (soft) limit, mean - std
strictly below the lower (hard) limit. Stage 2 builds an exploration range
of mean execution times around the hard limit from the base model's profile
and collects the eligible set: models whose mean falls in that range and
that still respect the upper limit. Stage 3 scores each eligible model by
accuracy times its slack under the upper limit over its distance from the
lower limit, normalizes the scores into a categorical distribution, and
samples the model to run.

If no model passes Stage 1 (e.g. the network ate the whole SLA), selection
falls back deterministically to the lowest-mean-latency model as a best
effort.

All selection functions are pure in (profiles, budget, config, generator
state); callers run them concurrently by giving each call its own generator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .budget import BudgetRange
from .profiles import ModelProfile

ACCURACY_METRICS = ("top1", "top5")


class NoModelsError(ValueError):
    """Selection was attempted against an empty profile list."""


@dataclass(frozen=True, slots=True)
class SelectorConfig:
    """Knobs of the selection algorithm.

    ``accuracy_metric`` chooses which accuracy feeds the objective (top-1 by
    default, the stricter serving metric). ``include_base_in_exploration``
    keeps the Stage-1 base model in the eligible set even when its own mean
    falls outside the exploration range (it always does when its std is
    positive). ``denominator_epsilon_ms`` floors the utility denominator
    |lower - mean| so a model sitting exactly on the hard limit gets a large
    finite utility instead of a division by zero; it is kept well below any
    realistic profile distance so scores match the raw formula everywhere
    else. ``rng_seed`` seeds sampling when no generator is passed in.
    """

    accuracy_metric: str = "top1"
    include_base_in_exploration: bool = True
    denominator_epsilon_ms: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.accuracy_metric not in ACCURACY_METRICS:
            raise ValueError(
                f"accuracy_metric must be one of {ACCURACY_METRICS}, "
                f"got {self.accuracy_metric!r}"
            )
        if not self.denominator_epsilon_ms > 0:
            raise ValueError("denominator_epsilon_ms must be > 0")


DEFAULT_CONFIG = SelectorConfig()


@dataclass(frozen=True, slots=True)
class SelectionDecision:
    """Full trace of one selection: choice, candidates, scores, stages."""

    chosen: str
    base_model: Optional[str]
    eligible_set: tuple[str, ...]
    exploration_range: Optional[tuple[float, float]]
    utilities: dict[str, float] = field(default_factory=dict)
    probabilities: dict[str, float] = field(default_factory=dict)
    fallback: bool = False

    def to_dict(self) -> dict:
        """JSON-serializable trace (gateway responses, simulator logs)."""
        return {
            "chosen": self.chosen,
            "base_model": self.base_model,
            "eligible_set": list(self.eligible_set),
            "exploration_range": (
                list(self.exploration_range)
                if self.exploration_range is not None
                else None
            ),
            "utilities": dict(self.utilities),
            "probabilities": dict(self.probabilities),
            "fallback": self.fallback,
        }


def _check_profiles(profiles: Sequence[ModelProfile]) -> None:
    if not profiles:
        raise NoModelsError("no model profiles available")


def fastest_select(profiles: Sequence[ModelProfile]) -> ModelProfile:
    """Model with the lowest mean execution time (ties: name order)."""
    _check_profiles(profiles)
    return min(profiles, key=lambda p: (p.mean_ms, p.name))


def greedy_select(
    profiles: Sequence[ModelProfile],
    budget: BudgetRange,
    accuracy_metric: str = "top1",
) -> ModelProfile:
    """Most accurate model whose mean fits the budget, else the fastest.

    Baseline policy: considers only the mean execution time against the raw
    budget, ignoring both the profile spread and the exploration range.
    """
    _check_profiles(profiles)
    feasible = [p for p in profiles if p.mean_ms <= budget.budget_ms]
    if not feasible:
        return fastest_select(profiles)
    return min(
        feasible, key=lambda p: (-p.accuracy(accuracy_metric), p.mean_ms, p.name)
    )


def stage1_base(
    profiles: Sequence[ModelProfile],
    budget: BudgetRange,
    cfg: SelectorConfig = DEFAULT_CONFIG,
) -> Optional[ModelProfile]:
    """Most accurate model satisfying both budget constraints, or None.

    Constraints are strict: mean + std < upper and mean - std < lower.
    Accuracy ties break toward the smaller mean, then name order, so replays
    are deterministic. None signals the fallback case (no feasible model).
    """
    _check_profiles(profiles)
    feasible = [
        p
        for p in profiles
        if p.mean_ms + p.std_ms < budget.upper_ms
        and p.mean_ms - p.std_ms < budget.lower_ms
    ]
    if not feasible:
        return None
    return min(
        feasible,
        key=lambda p: (-p.accuracy(cfg.accuracy_metric), p.mean_ms, p.name),
    )


def exploration_range(base: ModelProfile, budget: BudgetRange) -> tuple[float, float]:
    """Range of mean execution times worth exploring around the hard limit.

    Mirrors the base model's distance to the lower limit (plus its std) to
    the other side of the limit: the interval spans from mean + std to its
    reflection across the lower limit, ordered so low <= high in both
    branches.
    """
    mu, sigma = base.mean_ms, base.std_ms
    reflected = 2.0 * budget.lower_ms - mu + sigma
    if budget.lower_ms > mu:
        return (mu + sigma, reflected)
    return (reflected, mu + sigma)


def stage2_explore(
    profiles: Sequence[ModelProfile],
    base: ModelProfile,
    budget: BudgetRange,
    cfg: SelectorConfig = DEFAULT_CONFIG,
) -> tuple[tuple[float, float], list[ModelProfile]]:
    """Exploration range and eligible set for a Stage-1 base model.

    Eligible models have mean inside the (closed) exploration range and
    mean + std strictly below the upper limit. The base model is appended
    when configured, whether or not its own mean lies in the range. The
    returned set is ordered by (mean, name).
    """
    low, high = exploration_range(base, budget)
    eligible = {
        p.name: p
        for p in profiles
        if low <= p.mean_ms <= high and p.mean_ms + p.std_ms < budget.upper_ms
    }
    if cfg.include_base_in_exploration:
        eligible[base.name] = base
    ordered = sorted(eligible.values(), key=lambda p: (p.mean_ms, p.name))
    return (low, high), ordered


def _utility(p: ModelProfile, budget: BudgetRange, cfg: SelectorConfig) -> float:
    slack = budget.upper_ms - (p.mean_ms + p.std_ms)
    distance = max(abs(budget.lower_ms - p.mean_ms), cfg.denominator_epsilon_ms)
    return p.accuracy(cfg.accuracy_metric) * slack / distance


def stage3_select(
    eligible: Sequence[ModelProfile],
    budget: BudgetRange,
    cfg: SelectorConfig = DEFAULT_CONFIG,
    rng: Optional[np.random.Generator] = None,
    base: Optional[ModelProfile] = None,
) -> SelectionDecision:
    """Sample the model to run from utility-weighted probabilities.

    Utility trades accuracy-weighted slack under the upper limit against
    distance from the lower limit, so accurate models sitting close to the
    hard limit are favored. All-zero utilities (possible only with zero
    accuracies) degrade to the uniform distribution.
    """
    if not eligible:
        raise NoModelsError("eligible set is empty")
    for p in eligible:
        if not p.mean_ms + p.std_ms < budget.upper_ms:
            raise ValueError(
                f"{p.name}: mean + std ({p.mean_ms + p.std_ms}) must be "
                f"< upper_ms ({budget.upper_ms}) for utility to be positive"
            )
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    ordered = sorted(eligible, key=lambda p: (p.mean_ms, p.name))
    utilities = {p.name: _utility(p, budget, cfg) for p in ordered}
    total = sum(utilities.values())
    if total > 0.0:
        probabilities = {name: u / total for name, u in utilities.items()}
    else:
        probabilities = {p.name: 1.0 / len(ordered) for p in ordered}
    draw = rng.random()
    cumulative = 0.0
    chosen = ordered[-1].name
    for name, prob in probabilities.items():
        cumulative += prob
        if draw < cumulative:
            chosen = name
            break
    low, high = exploration_range(base, budget) if base is not None else (None, None)
    return SelectionDecision(
        chosen=chosen,
        base_model=base.name if base is not None else None,
        eligible_set=tuple(p.name for p in ordered),
        exploration_range=(low, high) if base is not None else None,
        utilities=utilities,
        probabilities=probabilities,
        fallback=False,
    )


def select(
    profiles: Sequence[ModelProfile],
    budget: BudgetRange,
    cfg: SelectorConfig = DEFAULT_CONFIG,
    rng: Optional[np.random.Generator] = None,
) -> SelectionDecision:
    """Run all three stages; fall back to the fastest model if none fits.

    The fallback decision is deterministic (probability 1 on the fastest
    model) and flagged, with an empty eligible set and no exploration range.
    """
    _check_profiles(profiles)
    base = stage1_base(profiles, budget, cfg)
    if base is None:
        fastest = fastest_select(profiles)
        return SelectionDecision(
            chosen=fastest.name,
            base_model=None,
            eligible_set=(),
            exploration_range=None,
            utilities={},
            probabilities={fastest.name: 1.0},
            fallback=True,
        )
    _, eligible = stage2_explore(profiles, base, budget, cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return stage3_select(eligible, budget, cfg, rng, base=base)
