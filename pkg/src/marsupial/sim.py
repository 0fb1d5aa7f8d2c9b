"""Scenario generation, scenario file I/O, and the episode driver.

A scenario fixes the whole problem instance up front (all rewards, the
overlap set, the prior); the episode driver replays it under sequential
revelation, handing the planner a state that physically contains only
the columns observed so far.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .conflict import (DeploymentPlan, OverlapSet, evaluate_plan,
                       make_overlap_set, plan_from_actions)
from .errors import InfeasibleScenarioError, InvalidActionError, ScenarioFormatError
from .mcts import JointAction, SearchState
from .prior import RewardPrior, prior_from_spec, prior_to_spec

SCENARIO_VERSION = 1


@dataclass(frozen=True)
class ScenarioInfo:
    """The planner-visible part of a scenario: everything except rewards."""

    num_robots: int
    num_stages: int
    deployments_per_robot: int
    validity: tuple[tuple[bool, ...], ...]
    prior: RewardPrior
    overlaps: OverlapSet


@dataclass(frozen=True)
class Scenario:
    """A full problem instance; observations use None for invalid stages."""

    num_robots: int
    num_stages: int
    deployments_per_robot: int
    observations: tuple[tuple[float | None, ...], ...]
    overlaps: OverlapSet
    prior: RewardPrior
    seed: int

    def __post_init__(self):
        r, n, d = self.num_robots, self.num_stages, self.deployments_per_robot
        if r < 1 or n < 1 or d < 1:
            raise ScenarioFormatError("R, N, D must all be positive")
        if len(self.observations) != r:
            raise ScenarioFormatError(
                f"observations: expected {r} rows, got {len(self.observations)}"
            )
        for r0, row in enumerate(self.observations):
            if len(row) != n:
                raise ScenarioFormatError(
                    f"observations[{r0}]: expected {n} entries, got {len(row)}"
                )
            valid_count = 0
            for j0, x in enumerate(row):
                if x is None:
                    continue
                if x < 0:
                    raise ScenarioFormatError(
                        f"observations[{r0}][{j0}]: rewards must be non-negative, got {x}"
                    )
                valid_count += 1
            if valid_count < d:
                raise ScenarioFormatError(
                    f"observations[{r0}]: robot {r0 + 1} has {valid_count} valid stages "
                    f"but must deploy {d}"
                )
        for gi, group in enumerate(self.overlaps):
            for pair in group:
                if not (1 <= pair.robot <= r and 1 <= pair.stage <= n):
                    raise ScenarioFormatError(
                        f"overlaps[{gi}]: member {list(pair)} outside the {r}x{n} grid"
                    )
                if self.observations[pair.robot - 1][pair.stage - 1] is None:
                    raise ScenarioFormatError(
                        f"overlaps[{gi}]: member {list(pair)} references an invalid stage"
                    )

    @cached_property
    def validity(self) -> tuple[tuple[bool, ...], ...]:
        return tuple(
            tuple(x is not None for x in row) for row in self.observations
        )

    def info(self) -> ScenarioInfo:
        return ScenarioInfo(
            num_robots=self.num_robots,
            num_stages=self.num_stages,
            deployments_per_robot=self.deployments_per_robot,
            validity=self.validity,
            prior=self.prior,
            overlaps=self.overlaps,
        )


@dataclass(frozen=True)
class StageRecord:
    """One step of the episode log."""

    stage: int
    observations: tuple[float | None, ...]
    action: JointAction


@dataclass(frozen=True)
class EpisodeResult:
    plan: DeploymentPlan
    total_reward: float
    stage_log: tuple[StageRecord, ...]
    planner_name: str
    walltime_s: float

    def to_json_dict(self) -> dict:
        return {
            "planner": self.planner_name,
            "total_reward": self.total_reward,
            "plan": self.plan.to_json(),
            "walltime_s": self.walltime_s,
            "stages": [
                {
                    "stage": rec.stage,
                    "observations": list(rec.observations),
                    "action": ["deploy" if a else "skip" for a in rec.action],
                }
                for rec in self.stage_log
            ],
        }


# ---------------------------------------------------------------------------
# Generation


def generate_overlaps(num_robots: int, num_stages: int, num_overlaps: int,
                      overlap_size: tuple[int, int], rng: np.random.Generator,
                      validity: Sequence[Sequence[bool]] | None = None) -> OverlapSet:
    """Draw pairwise-disjoint overlaps: a size from the range, distinct robots,
    one unused valid stage per chosen robot."""
    lo, hi = overlap_size
    if lo < 2:
        raise ValueError(f"overlap sizes must be >= 2, got {lo}")
    # robots within an overlap are distinct, so sizes are capped by the team
    hi = min(hi, num_robots)
    lo = min(lo, hi) if hi >= 2 else lo
    if num_overlaps > 0 and lo > hi:
        raise InfeasibleScenarioError(
            f"overlap size >= {lo} impossible with {num_robots} robots"
        )
    free: list[list[int]] = []
    for r0 in range(num_robots):
        if validity is None:
            free.append(list(range(1, num_stages + 1)))
        else:
            free.append([s for s in range(1, num_stages + 1) if validity[r0][s - 1]])
    groups = []
    for gi in range(num_overlaps):
        size = int(rng.integers(lo, hi + 1))
        eligible = [r0 for r0 in range(num_robots) if free[r0]]
        if len(eligible) < size:
            raise InfeasibleScenarioError(
                f"cannot place overlap {gi}: only {len(eligible)} robots still have "
                f"unused stages, need {size}"
            )
        chosen = rng.choice(len(eligible), size=size, replace=False)
        group = []
        for ci in sorted(int(i) for i in chosen):
            r0 = eligible[ci]
            stages = free[r0]
            s = stages.pop(int(rng.integers(len(stages))))
            group.append((r0 + 1, s))
        groups.append(group)
    return make_overlap_set(groups)


def generate_observations(prior: RewardPrior, num_robots: int, num_stages: int,
                          rng: np.random.Generator) -> tuple[tuple[float, ...], ...]:
    """Independent draws from the prior for every decision point (no invalid stages)."""
    values = prior.sample(rng, size=(num_robots, num_stages))
    return tuple(tuple(float(x) for x in row) for row in values)


def generate_poisson_scenario(num_robots: int, num_stages: int,
                              deployments_per_robot: int, rate: float,
                              num_overlaps: int, seed: int,
                              overlap_size: tuple[int, int] = (3, 4),
                              prior: RewardPrior | None = None) -> Scenario:
    """Self-contained seeded scenario draw: Poisson rewards plus random overlaps."""
    from .prior import poisson_prior

    if deployments_per_robot > num_stages:
        raise InfeasibleScenarioError(
            f"D={deployments_per_robot} exceeds N={num_stages}"
        )
    if prior is None:
        prior = poisson_prior(rate)
    rng = np.random.default_rng(seed)
    observations = generate_observations(prior, num_robots, num_stages, rng)
    overlaps = generate_overlaps(num_robots, num_stages, num_overlaps,
                                 overlap_size, rng)
    return Scenario(
        num_robots=num_robots,
        num_stages=num_stages,
        deployments_per_robot=deployments_per_robot,
        observations=observations,
        overlaps=overlaps,
        prior=prior,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Episode driver


def _check_action(action, state: SearchState, suffix) -> None:
    r = state.num_robots
    j = state.stage
    if len(action) != r:
        raise InvalidActionError(
            f"stage {j}: action has {len(action)} entries for {r} robots"
        )
    for r0 in range(r):
        k = state.passengers_remaining[r0]
        if action[r0]:
            if k == 0:
                raise InvalidActionError(
                    f"stage {j}: robot {r0 + 1} deploys with no passengers left"
                )
            if not state.validity[r0][j - 1]:
                raise InvalidActionError(
                    f"stage {j}: robot {r0 + 1} deploys at an invalid stage"
                )
        else:
            remaining = suffix[r0][j]
            if k > remaining - (1 if state.validity[r0][j - 1] else 0):
                raise InvalidActionError(
                    f"stage {j}: robot {r0 + 1} skips but still has {k} passengers for "
                    f"{remaining} remaining valid stages"
                )


def run_episode(scenario: Scenario, planner) -> EpisodeResult:
    """Play one episode under sequential revelation.

    At stage j the planner receives only columns 1..j; its joint action is
    feasibility-checked and committed. The final reward is the penalized
    evaluation of the realized plan.
    """
    from .mcts import _suffix_valid

    r, n = scenario.num_robots, scenario.num_stages
    validity = scenario.validity
    suffix = _suffix_valid(validity)
    passengers = [scenario.deployments_per_robot] * r
    past: list[JointAction] = []
    log: list[StageRecord] = []
    t0 = time.perf_counter()
    for j in range(1, n + 1):
        observed = tuple(tuple(row[:j]) for row in scenario.observations)
        state = SearchState(
            stage=j,
            passengers_remaining=tuple(passengers),
            past_actions=tuple(past),
            observed=observed,
            validity=validity,
        )
        action = tuple(bool(a) for a in planner.act(state))
        _check_action(action, state, suffix)
        for r0 in range(r):
            if action[r0]:
                passengers[r0] -= 1
        past.append(action)
        log.append(StageRecord(
            stage=j,
            observations=tuple(row[j - 1] for row in scenario.observations),
            action=action,
        ))
    walltime = time.perf_counter() - t0
    if any(k != 0 for k in passengers):
        raise InvalidActionError(
            f"episode ended with undeployed passengers: {passengers}"
        )
    plan = plan_from_actions(past, r)
    total = evaluate_plan(scenario.observations, plan, scenario.overlaps)
    return EpisodeResult(
        plan=plan,
        total_reward=total,
        stage_log=tuple(log),
        planner_name=getattr(planner, "name", type(planner).__name__),
        walltime_s=walltime,
    )


# ---------------------------------------------------------------------------
# Scenario file I/O


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ScenarioFormatError(f"{path}: {msg}")


def scenario_to_json_dict(scenario: Scenario) -> dict:
    overlaps = [
        [[pair.robot, pair.stage] for pair in sorted(group)]
        for group in scenario.overlaps
    ]
    return {
        "version": SCENARIO_VERSION,
        "R": scenario.num_robots,
        "N": scenario.num_stages,
        "D": scenario.deployments_per_robot,
        "prior": prior_to_spec(scenario.prior),
        "observations": [list(row) for row in scenario.observations],
        "overlaps": overlaps,
        "seed": scenario.seed,
    }


def scenario_from_json_dict(doc) -> Scenario:
    _require(isinstance(doc, dict), "$", "expected a JSON object")
    version = doc.get("version")
    _require(version == SCENARIO_VERSION, "version",
             f"expected {SCENARIO_VERSION}, got {version!r}")
    for key in ("R", "N", "D", "prior", "observations", "overlaps", "seed"):
        _require(key in doc, key, "missing required key")
    for key in ("R", "N", "D", "seed"):
        v = doc[key]
        _require(isinstance(v, int) and not isinstance(v, bool), key,
                 f"expected an integer, got {v!r}")
    r, n, d = doc["R"], doc["N"], doc["D"]
    _require(r >= 1, "R", "must be >= 1")
    _require(n >= 1, "N", "must be >= 1")
    _require(1 <= d <= n, "D", f"must be in 1..N={n}")
    prior = prior_from_spec(doc["prior"], "prior")

    obs_doc = doc["observations"]
    _require(isinstance(obs_doc, list) and len(obs_doc) == r, "observations",
             f"expected a list of {r} rows")
    observations = []
    for r0, row in enumerate(obs_doc):
        _require(isinstance(row, list) and len(row) == n, f"observations[{r0}]",
                 f"expected a list of {n} entries")
        parsed_row = []
        for j0, x in enumerate(row):
            if x is None:
                parsed_row.append(None)
                continue
            _require(isinstance(x, (int, float)) and not isinstance(x, bool),
                     f"observations[{r0}][{j0}]", f"expected a number or null, got {x!r}")
            parsed_row.append(float(x))
        observations.append(tuple(parsed_row))

    ov_doc = doc["overlaps"]
    _require(isinstance(ov_doc, list), "overlaps", "expected a list")
    groups = []
    for gi, group in enumerate(ov_doc):
        _require(isinstance(group, list), f"overlaps[{gi}]", "expected a list of pairs")
        pairs = []
        for pi, pair in enumerate(group):
            _require(
                isinstance(pair, list) and len(pair) == 2
                and all(isinstance(v, int) and not isinstance(v, bool) for v in pair),
                f"overlaps[{gi}][{pi}]", f"expected [robot, stage] integers, got {pair!r}",
            )
            pairs.append((pair[0], pair[1]))
        groups.append(pairs)
    try:
        overlaps = make_overlap_set(groups)
    except ValueError as exc:
        raise ScenarioFormatError(f"overlaps: {exc}") from exc

    return Scenario(
        num_robots=r,
        num_stages=n,
        deployments_per_robot=d,
        observations=tuple(observations),
        overlaps=overlaps,
        prior=prior,
        seed=doc["seed"],
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_json_dict(scenario), fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"$: not valid JSON ({exc})") from exc
    return scenario_from_json_dict(doc)
