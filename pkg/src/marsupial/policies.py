"""The four online deployment strategies behind one planner interface.

Strategies are addressed by name: "mcts-ssap", "mcts-random",
"single-robot-ssap", "random". A planner instance lives for one episode
and emits exactly one joint action per stage via ``act(state)``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import InfeasibleScenarioError
from .mcts import (JointAction, PlannerConfig, SearchState, _suffix_valid,
                   plan_step)
from .sim import ScenarioInfo
from .ssap import ThresholdTable, compute_thresholds, decide

STRATEGIES = ("mcts-ssap", "mcts-random", "single-robot-ssap", "random")

#: Stable ids used for seed derivation; adding strategies must not renumber.
STRATEGY_IDS = {
    "mcts-ssap": 1,
    "mcts-random": 2,
    "single-robot-ssap": 3,
    "random": 4,
}


class MctsPlanner:
    """Tree-search planner; rollout flavor picked by the config."""

    def __init__(self, info: ScenarioInfo, config: PlannerConfig):
        self.info = info
        self.config = config
        self.name = "mcts-ssap" if config.rollout == "ssap" else "mcts-random"
        self.thresholds: ThresholdTable | None = None
        if config.rollout == "ssap":
            self.thresholds = compute_thresholds(info.prior, info.num_stages)

    def act(self, state: SearchState) -> JointAction:
        return plan_step(state, self.info.prior, self.info.overlaps,
                         self.thresholds, self.config)


class SingleRobotSsapPlanner:
    """Optimal per-robot threshold policy, blind to overlaps.

    Each robot uses its own count of remaining valid stages, so staggered
    or truncated robots get the correct row of the shared table.
    """

    name = "single-robot-ssap"

    def __init__(self, info: ScenarioInfo):
        self.info = info
        self.thresholds = compute_thresholds(info.prior, info.num_stages)

    def act(self, state: SearchState) -> JointAction:
        j = state.stage
        suffix = _suffix_valid(state.validity)
        action = []
        for r0 in range(state.num_robots):
            k = state.passengers_remaining[r0]
            if k == 0 or not state.validity[r0][j - 1]:
                action.append(False)
                continue
            remaining = suffix[r0][j]
            if k > remaining:
                raise InfeasibleScenarioError(
                    f"robot {r0 + 1} has {k} passengers but {remaining} valid stages left"
                )
            x = state.observed[r0][j - 1]
            action.append(decide(self.thresholds, x, remaining, k))
        return tuple(action)


def init_random_baseline(info: ScenarioInfo, rng: np.random.Generator) -> tuple[frozenset[int], ...]:
    """Draw D distinct valid stages per robot, uniformly without replacement."""
    chosen = []
    d = info.deployments_per_robot
    for r0 in range(info.num_robots):
        valid_stages = [s for s in range(1, info.num_stages + 1)
                        if info.validity[r0][s - 1]]
        if len(valid_stages) < d:
            raise InfeasibleScenarioError(
                f"robot {r0 + 1} has {len(valid_stages)} valid stages, needs {d}"
            )
        picks = rng.choice(len(valid_stages), size=d, replace=False)
        chosen.append(frozenset(valid_stages[int(i)] for i in picks))
    return tuple(chosen)


class RandomBaselinePlanner:
    """Commits to D uniformly drawn valid stages per robot at episode start."""

    name = "random"

    def __init__(self, info: ScenarioInfo, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, STRATEGY_IDS["random"]]))
        self.chosen = init_random_baseline(info, rng)

    def act(self, state: SearchState) -> JointAction:
        j = state.stage
        return tuple(j in self.chosen[r0] for r0 in range(state.num_robots))


def make_planner(strategy: str, info: ScenarioInfo, config: PlannerConfig):
    """Build a fresh per-episode planner for the named strategy."""
    if strategy == "mcts-ssap":
        return MctsPlanner(info, replace(config, rollout="ssap"))
    if strategy == "mcts-random":
        return MctsPlanner(info, replace(config, rollout="random"))
    if strategy == "single-robot-ssap":
        return SingleRobotSsapPlanner(info)
    if strategy == "random":
        return RandomBaselinePlanner(info, config.seed)
    raise ValueError(f"unknown strategy {strategy!r}; pick one of {STRATEGIES}")
