"""Overlap sets, conflict penalty factors, and realized plan evaluation.

A deployment's reward is divided by its penalty factor p: the number of
selected deployments (itself included) that share at least one overlap
with it. Deployments in no overlap, or whose overlap partners were not
selected, keep p = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import InvalidActionError


class RobotStage(NamedTuple):
    """A decision point: robot and stage indices, both 1-based."""

    robot: int
    stage: int


@dataclass(frozen=True)
class OverlapSet:
    """Validated collection of overlaps (sets of conflicting decision points)."""

    overlaps: tuple[frozenset[RobotStage], ...] = ()
    allow_self_conflicts: bool = False

    def __post_init__(self):
        for idx, group in enumerate(self.overlaps):
            if len(group) < 2:
                raise ValueError(f"overlaps[{idx}]: an overlap needs >= 2 members")
            for pair in group:
                if pair.robot < 1 or pair.stage < 1:
                    raise ValueError(f"overlaps[{idx}]: indices are 1-based, got {pair}")
            if not self.allow_self_conflicts:
                robots = [pair.robot for pair in group]
                if len(set(robots)) != len(robots):
                    raise ValueError(
                        f"overlaps[{idx}]: repeated robot within one overlap "
                        "(pass allow_self_conflicts=True to permit this)"
                    )

    def __len__(self) -> int:
        return len(self.overlaps)

    def __iter__(self) -> Iterator[frozenset[RobotStage]]:
        return iter(self.overlaps)

    def pair_masks(self) -> dict[RobotStage, int]:
        """Bitmask of overlap memberships per decision point.

        Two decision points conflict iff their masks share a bit.
        """
        masks: dict[RobotStage, int] = {}
        for idx, group in enumerate(self.overlaps):
            bit = 1 << idx
            for pair in group:
                masks[pair] = masks.get(pair, 0) | bit
        return masks


def make_overlap_set(groups: Iterable[Iterable[tuple[int, int]]],
                     allow_self_conflicts: bool = False) -> OverlapSet:
    """Build an OverlapSet from plain (robot, stage) pair groups."""
    overlaps = tuple(
        frozenset(RobotStage(int(r), int(j)) for r, j in group) for group in groups
    )
    return OverlapSet(overlaps=overlaps, allow_self_conflicts=allow_self_conflicts)


@dataclass(frozen=True)
class DeploymentPlan:
    """Per-robot ascending deployment stage sets; robot r is stages[r-1]."""

    stages: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for r0, row in enumerate(self.stages):
            if any(b <= a for a, b in zip(row, row[1:])):
                raise ValueError(f"plan stages for robot {r0 + 1} must be strictly ascending")
            if any(s < 1 for s in row):
                raise ValueError(f"plan stages for robot {r0 + 1} must be 1-based")

    @property
    def num_robots(self) -> int:
        return len(self.stages)

    def pairs(self) -> list[RobotStage]:
        """All selected deployments as robot-stage pairs."""
        return [
            RobotStage(r0 + 1, s) for r0, row in enumerate(self.stages) for s in row
        ]

    def to_json(self) -> list[list[int]]:
        return [list(row) for row in self.stages]


def plan_from_actions(actions: Sequence[Sequence[bool]], num_robots: int) -> DeploymentPlan:
    """Collect deploy flags per stage (1-based implicit) into a plan."""
    stages: list[list[int]] = [[] for _ in range(num_robots)]
    for s0, action in enumerate(actions):
        for r0 in range(num_robots):
            if action[r0]:
                stages[r0].append(s0 + 1)
    return DeploymentPlan(stages=tuple(tuple(row) for row in stages))


def evaluate_entries(entries: Sequence[tuple[float, int]]) -> float:
    """Penalized sum over (value, conflict-mask) deployment entries.

    This is the single evaluation core shared by plan evaluation, the
    search's rollout scoring, and the oracles. p for an entry is 1 plus
    the number of other entries whose mask shares a bit with it.
    """
    total = 0.0
    flagged_v: list[float] = []
    flagged_m: list[int] = []
    for v, m in entries:
        if m:
            flagged_v.append(v)
            flagged_m.append(m)
        else:
            total += v
    n = len(flagged_m)
    for i in range(n):
        m = flagged_m[i]
        p = 1
        for j in range(n):
            if j != i and flagged_m[j] & m:
                p += 1
        total += flagged_v[i] / p
    return total


def penalty_factor(plan: DeploymentPlan, overlaps: OverlapSet, at: RobotStage) -> int:
    """Penalty divisor for the deployment ``at`` within ``plan``.

    ``at`` must be one of the plan's deployments.
    """
    at = RobotStage(*at)
    pairs = plan.pairs()
    if at not in pairs:
        raise InvalidActionError(f"deployment {at} is not part of the plan")
    masks = overlaps.pair_masks()
    at_mask = masks.get(at, 0)
    if not at_mask:
        return 1
    return 1 + sum(
        1 for d in pairs if d != at and masks.get(d, 0) & at_mask
    )


def evaluate_plan(observations: Sequence[Sequence[float | None]],
                  plan: DeploymentPlan,
                  overlaps: OverlapSet) -> float:
    """Realized penalized reward of a plan: sum over deployments of x / p.

    ``observations[r-1][j-1]`` must be a number (not None) for every
    planned deployment. The empty plan scores 0.
    """
    masks = overlaps.pair_masks()
    entries: list[tuple[float, int]] = []
    for pair in plan.pairs():
        x = observations[pair.robot - 1][pair.stage - 1]
        if x is None:
            raise InvalidActionError(f"plan deploys robot {pair.robot} at invalid stage {pair.stage}")
        entries.append((float(x), masks.get(pair, 0)))
    return evaluate_entries(entries)


class ConflictIndex:
    """Dense per-(robot, stage) conflict masks for hot loops.

    ``mask_table[r-1][s-1]`` is the overlap-membership bitmask of that
    decision point (0 when it belongs to no overlap).
    """

    def __init__(self, overlaps: OverlapSet, num_robots: int, num_stages: int):
        table = [[0] * num_stages for _ in range(num_robots)]
        for pair, m in overlaps.pair_masks().items():
            if pair.robot > num_robots or pair.stage > num_stages:
                raise ValueError(
                    f"overlap member {pair} outside the {num_robots}x{num_stages} grid"
                )
            table[pair.robot - 1][pair.stage - 1] = m
        self.mask_table: list[list[int]] = table

    def mask(self, robot: int, stage: int) -> int:
        return self.mask_table[robot - 1][stage - 1]
