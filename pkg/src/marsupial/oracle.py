"""Brute-force ground truth for verification.

Three independent references: the hindsight-optimal plan by exhaustive
enumeration, the expected-value-optimal open-loop plan from a decision
point (the quantity the tree search converges to), and the single-robot
backward-induction optimum. Plan scoring is shared with the conflict
module so the search, not the scorer, is what gets tested.
"""

from __future__ import annotations

import math
from itertools import combinations, product
from typing import Sequence

from .conflict import DeploymentPlan, OverlapSet, evaluate_entries
from .errors import SizeGuardError
from .mcts import JointAction, SearchState
from .prior import RewardPrior

ENUMERATION_GUARD = 10_000_000


def _guard_product(counts: Sequence[int]) -> None:
    total = 1
    for c in counts:
        total *= c
        if total > ENUMERATION_GUARD:
            raise SizeGuardError(
                f"plan enumeration would exceed {ENUMERATION_GUARD} candidates"
            )


def offline_optimal(observations: Sequence[Sequence[float | None]],
                    overlaps: OverlapSet,
                    deployments_per_robot: int) -> tuple[DeploymentPlan, float]:
    """Hindsight-optimal plan given all realized rewards.

    Exhaustive over all per-robot stage subsets; ties go to the
    lexicographically smallest plan.
    """
    d = deployments_per_robot
    masks = overlaps.pair_masks()
    valid_per_robot = []
    for r0, row in enumerate(observations):
        valid_stages = [s for s in range(1, len(row) + 1) if row[s - 1] is not None]
        if len(valid_stages) < d:
            raise SizeGuardError(
                f"robot {r0 + 1} has {len(valid_stages)} valid stages, needs {d}"
            )
        valid_per_robot.append(valid_stages)
    _guard_product([math.comb(len(v), d) for v in valid_per_robot])

    per_robot: list[list[tuple[tuple[int, ...], tuple[tuple[float, int], ...]]]] = []
    for r0, valid_stages in enumerate(valid_per_robot):
        row = observations[r0]
        combos = []
        for stages in combinations(valid_stages, d):
            entries = tuple(
                (float(row[s - 1]), masks.get((r0 + 1, s), 0)) for s in stages
            )
            combos.append((stages, entries))
        per_robot.append(combos)

    best_value = -math.inf
    best_plan: tuple[tuple[int, ...], ...] | None = None
    for choice in product(*per_robot):
        entries = [e for _, robot_entries in choice for e in robot_entries]
        value = evaluate_entries(entries)
        if value > best_value:
            best_value = value
            best_plan = tuple(stages for stages, _ in choice)
    return DeploymentPlan(stages=best_plan), best_value


def single_robot_dp(prior: RewardPrior, n_stages: int, deployments: int) -> float:
    """Backward-induction optimum for one robot, no conflicts.

    max over deploy/skip at each stage of the expected total, exact on the
    prior's finite support.
    """
    if len(prior.support) > 64 or n_stages > 64:
        raise SizeGuardError("single_robot_dp is limited to support <= 64 and N <= 64")
    if not 1 <= deployments <= n_stages:
        raise ValueError(f"need 1 <= D <= N, got D={deployments}, N={n_stages}")
    support = prior.support
    probs = prior.probs
    mean = prior.mean()
    prev = [0.0] * (deployments + 1)
    for n in range(1, n_stages + 1):
        cur = [0.0] * (deployments + 1)
        for k in range(1, min(deployments, n) + 1):
            if k >= n:
                cur[k] = n * mean
                continue
            stay = prev[k]
            go = prev[k - 1]
            acc = 0.0
            for x, p in zip(support, probs):
                dep = x + go
                acc += p * (dep if dep > stay else stay)
            cur[k] = acc
        prev = cur
    return prev[deployments]


def _enumerate_open_loop(state: SearchState, prior: RewardPrior, overlaps: OverlapSet):
    """Yield (plan, root_bits, value) for every feasible completion plan."""
    j = state.stage
    n = state.num_stages
    mean = prior.mean()
    masks = overlaps.pair_masks()

    past_entries: list[tuple[float, int]] = []
    for s0, action in enumerate(state.past_actions):
        for r0, deployed in enumerate(action):
            if deployed:
                x = state.observed[r0][s0]
                past_entries.append((float(x), masks.get((r0 + 1, s0 + 1), 0)))

    valid_per_robot = []
    for r0 in range(state.num_robots):
        k = state.passengers_remaining[r0]
        valid_stages = [s for s in range(j, n + 1) if state.validity[r0][s - 1]]
        if len(valid_stages) < k:
            raise SizeGuardError(
                f"robot {r0 + 1} has {k} passengers but {len(valid_stages)} valid stages left"
            )
        valid_per_robot.append(valid_stages)
    _guard_product([
        math.comb(len(v), state.passengers_remaining[r0])
        for r0, v in enumerate(valid_per_robot)
    ])

    per_robot = []
    for r0, valid_stages in enumerate(valid_per_robot):
        k = state.passengers_remaining[r0]
        combos = []
        for stages in combinations(valid_stages, k):
            entries = tuple(
                (float(state.observed[r0][j - 1]) if s == j else mean,
                 masks.get((r0 + 1, s), 0))
                for s in stages
            )
            combos.append((stages, entries))
        per_robot.append(combos)

    for choice in product(*per_robot):
        entries = list(past_entries)
        bits = 0
        for r0, (stages, robot_entries) in enumerate(choice):
            entries.extend(robot_entries)
            if j in stages:
                bits |= 1 << r0
        plan = tuple(stages for stages, _ in choice)
        yield plan, bits, evaluate_entries(entries)


def open_loop_action_values(state: SearchState, prior: RewardPrior,
                            overlaps: OverlapSet) -> dict[JointAction, float]:
    """Best open-loop expected value achievable per current-stage joint action."""
    best: dict[int, float] = {}
    for _, bits, value in _enumerate_open_loop(state, prior, overlaps):
        if value > best.get(bits, -math.inf):
            best[bits] = value
    r = state.num_robots
    return {
        tuple(bool(bits >> r0 & 1) for r0 in range(r)): v for bits, v in best.items()
    }


def expected_open_loop_optimum(state: SearchState, prior: RewardPrior,
                               overlaps: OverlapSet) -> tuple[JointAction, float]:
    """Optimal open-loop plan from this state; returns its first joint action.

    Future rewards enter as the prior mean; penalties are determined by the
    fixed plan (committed past deployments included). Ties go to the
    lexicographically smallest plan.
    """
    best_value = -math.inf
    best_plan = None
    best_bits = 0
    for plan, bits, value in _enumerate_open_loop(state, prior, overlaps):
        if value > best_value:
            best_value = value
            best_plan = plan
            best_bits = bits
    if best_plan is None:
        raise SizeGuardError("no feasible completion plan")
    r = state.num_robots
    return tuple(bool(best_bits >> r0 & 1) for r0 in range(r)), best_value
