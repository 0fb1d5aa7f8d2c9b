"""Centralized anytime tree search over joint deploy/skip actions.

One search tree per decision stage: UCT selection over joint actions,
uniform expansion of an untried feasible action, rollout completion of
the remaining stages (threshold policy on a sampled realization, or
uniform random), evaluation of the full action sequence under the
conflict-penalty model, and running-mean backpropagation.

Joint actions are tuples of per-robot deploy flags; internally they are
packed into bitmasks (robot r <-> bit r-1) to keep the inner loop cheap.
"""

from __future__ import annotations

import math
import random as _pyrandom
from dataclasses import dataclass

import numpy as np

from .conflict import ConflictIndex, OverlapSet, evaluate_entries
from .errors import InfeasibleScenarioError, InvalidActionError
from .prior import INF, RewardPrior
from .ssap import ThresholdTable

JointAction = tuple[bool, ...]

#: Exploration constant used by the benchmark experiments.
DEFAULT_EXPLORATION = 0.05 * math.sqrt(2.0)

_SAMPLE_BLOCK = 256


@dataclass(frozen=True)
class PlannerConfig:
    """Knobs for one search instance.

    ``scale`` divides every rollout evaluation before backpropagation
    (reward normalization); raw rewards are kept for reporting elsewhere.
    """

    iterations: int = 10_000
    exploration_c: float = DEFAULT_EXPLORATION
    rollout: str = "ssap"  # "ssap" | "random"
    samples_per_rollout: int = 1
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.exploration_c < 0:
            raise ValueError(f"exploration constant must be >= 0, got {self.exploration_c}")
        if self.rollout not in ("ssap", "random"):
            raise ValueError(f"unknown rollout policy {self.rollout!r}")
        if self.samples_per_rollout < 1:
            raise ValueError(f"samples_per_rollout must be >= 1, got {self.samples_per_rollout}")
        if not self.scale > 0:
            raise ValueError(f"normalization scale must be positive, got {self.scale}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


def normalization_scale(prior: RewardPrior, quantile: float = 0.9) -> float:
    """Reward normalization scale: the prior's given quantile, or 1 if that is 0."""
    s = prior.quantile(quantile)
    return s if s > 0 else 1.0


@dataclass(frozen=True)
class SearchState:
    """Everything the online planner knows at the current stage.

    ``observed`` has exactly ``stage`` entries per robot: rewards are
    revealed sequentially and future columns simply do not exist here.
    None marks an invalid stage, matching ``validity``.
    """

    stage: int
    passengers_remaining: tuple[int, ...]
    past_actions: tuple[JointAction, ...]
    observed: tuple[tuple[float | None, ...], ...]
    validity: tuple[tuple[bool, ...], ...]

    @property
    def num_robots(self) -> int:
        return len(self.passengers_remaining)

    @property
    def num_stages(self) -> int:
        return len(self.validity[0])


def _check_state(state: SearchState) -> None:
    n = state.num_stages
    r = state.num_robots
    if not 1 <= state.stage <= n:
        raise ValueError(f"stage {state.stage} outside 1..{n}")
    if len(state.validity) != r or len(state.observed) != r:
        raise ValueError("validity/observed row count does not match robot count")
    if len(state.past_actions) != state.stage - 1:
        raise ValueError(
            f"expected {state.stage - 1} past actions, got {len(state.past_actions)}"
        )
    for r0 in range(r):
        if len(state.observed[r0]) != state.stage:
            raise ValueError(
                f"observed[{r0}] has {len(state.observed[r0])} entries, expected {state.stage}"
            )
        if len(state.validity[r0]) != n:
            raise ValueError(f"validity[{r0}] has wrong length")
        if state.passengers_remaining[r0] < 0:
            raise ValueError(f"negative passengers for robot {r0 + 1}")


class SearchNode:
    """Tree node: incoming joint action, per-node running statistics."""

    __slots__ = ("action_bits", "stage", "parent", "children", "untried",
                 "visits", "mean", "passengers", "deploys")

    def __init__(self, action_bits, stage, parent, passengers, untried):
        self.action_bits = action_bits
        self.stage = stage
        self.parent = parent
        self.children: list[SearchNode] = []
        self.untried = untried
        self.visits = 0
        self.mean = 0.0
        self.passengers = passengers
        if action_bits:
            self.deploys = tuple(
                (r0, stage) for r0 in range(len(passengers)) if action_bits >> r0 & 1
            )
        else:
            self.deploys = ()


def uct_score(child_mean: float, parent_visits: int, child_visits: int, c: float) -> float:
    """Upper confidence bound for child selection; unvisited children rank first."""
    if parent_visits < 1:
        raise ValueError("parent must have been visited at least once")
    if child_visits == 0:
        return INF
    return child_mean + c * math.sqrt(math.log(parent_visits) / child_visits)


def backpropagate(node: SearchNode, evaluation: float) -> None:
    """Fold one evaluation into the running means along the path to the root."""
    while node is not None:
        t = node.visits + 1
        node.visits = t
        node.mean += (evaluation - node.mean) / t
        node = node.parent


def _suffix_valid(validity: tuple[tuple[bool, ...], ...]) -> list[list[int]]:
    """suffix[r0][s] = number of valid stages in s..N (1-based s; [0] unused)."""
    n = len(validity[0])
    out = []
    for row in validity:
        suf = [0] * (n + 2)
        for s in range(n, 0, -1):
            suf[s] = suf[s + 1] + (1 if row[s - 1] else 0)
        out.append(suf)
    return out


def _robot_options(k: int, valid_now: bool, remaining_valid: int, r0: int) -> tuple[bool, ...]:
    """Per-robot allowed deploy flags at one stage; raises if stranded."""
    if k > remaining_valid:
        raise InfeasibleScenarioError(
            f"robot {r0 + 1} has {k} passengers but only {remaining_valid} valid stages left"
        )
    if k == 0 or not valid_now:
        return (False,)
    if k == remaining_valid:
        return (True,)
    return (False, True)


def _joint_options(stage, passengers, valid, suffix):
    """All feasible joint actions at ``stage`` as (bits, new_passengers) pairs."""
    combos = [(0, passengers)]
    for r0, k in enumerate(passengers):
        opts = _robot_options(k, valid[r0][stage - 1], suffix[r0][stage], r0)
        if opts == (False,):
            continue
        new_combos = []
        bit = 1 << r0
        for bits, pas in combos:
            for deploy in opts:
                if deploy:
                    npas = list(pas)
                    npas[r0] = k - 1
                    new_combos.append((bits | bit, tuple(npas)))
                else:
                    new_combos.append((bits, pas))
        combos = new_combos
    combos.sort(key=lambda c: c[0])
    return combos


def _decode(bits: int, num_robots: int) -> JointAction:
    return tuple(bool(bits >> r0 & 1) for r0 in range(num_robots))


def feasible_actions(state: SearchState, stage: int) -> list[JointAction]:
    """Feasible joint actions at ``stage`` given the state's passenger counts.

    Deploy requires passengers remaining and a valid stage; skip is removed
    when it would strand a passenger (deployments must finish by the last
    valid stage).
    """
    _check_state(state)
    if not state.stage <= stage <= state.num_stages:
        raise ValueError(f"stage {stage} outside {state.stage}..{state.num_stages}")
    suffix = _suffix_valid(state.validity)
    combos = _joint_options(stage, state.passengers_remaining, state.validity, suffix)
    return [_decode(bits, state.num_robots) for bits, _ in combos]


def _ssap_complete(stage_from, passengers, conf_masks, sam, obs_cur, j,
                   valid, suffix, mask_tbl, rows, num_stages):
    """Threshold-policy completion of stages stage_from..N on one realization.

    ``conf_masks`` (owned by the caller) holds the conflict masks of every
    already-committed deployment; rewards at conflicting points are divided
    by 1 + (number of committed deployments sharing an overlap) before the
    threshold comparison. Robots are processed in ascending index order.
    Returns the deployments made as (robot0, stage) pairs.
    """
    k = list(passengers)
    deploys = []
    num_robots = len(k)
    for s in range(stage_from, num_stages + 1):
        si = s - 1
        off = s - j - 1
        for r0 in range(num_robots):
            kr = k[r0]
            if kr == 0 or not valid[r0][si]:
                continue
            mk = mask_tbl[r0][si]
            m = suffix[r0][s]
            if kr >= m:
                deploy = True
            else:
                x = obs_cur[r0] if s == j else sam[r0][off]
                if mk:
                    p = 1
                    for mm in conf_masks:
                        if mm & mk:
                            p += 1
                    if p > 1:
                        x = x / p
                deploy = x > rows[m][m - kr]
            if deploy:
                k[r0] = kr - 1
                deploys.append((r0, s))
                if mk:
                    conf_masks.append(mk)
    return deploys


def _random_complete(stage_from, passengers, valid, suffix, rng, num_stages):
    """Uniform completion among feasible joint actions, forced deploys respected."""
    k = list(passengers)
    deploys = []
    num_robots = len(k)
    for s in range(stage_from, num_stages + 1):
        si = s - 1
        free = []
        for r0 in range(num_robots):
            kr = k[r0]
            if kr == 0 or not valid[r0][si]:
                continue
            if kr >= suffix[r0][s]:
                k[r0] = kr - 1
                deploys.append((r0, s))
            else:
                free.append(r0)
        if free:
            pick = rng.getrandbits(len(free))
            for pos, r0 in enumerate(free):
                if pick >> pos & 1:
                    k[r0] -= 1
                    deploys.append((r0, s))
    return deploys


def _deploys_to_actions(state, path_actions, deploys):
    """Stitch fixed path actions plus completion deploys into (A_j..A_N)."""
    j = state.stage
    n = state.num_stages
    r = state.num_robots
    flags = [[False] * r for _ in range(n - j + 1)]
    for s0, action in enumerate(path_actions):
        for r0 in range(r):
            if action[r0]:
                flags[s0][r0] = True
    for r0, s in deploys:
        flags[s - j][r0] = True
    return [tuple(row) for row in flags]


def _apply_path(state, path_actions, mask_tbl):
    """Passenger counts and committed conflict masks after past + path actions."""
    passengers = list(state.passengers_remaining)
    conf_masks = []
    for s0, action in enumerate(state.past_actions):
        for r0 in range(state.num_robots):
            if action[r0]:
                mk = mask_tbl[r0][s0]
                if mk:
                    conf_masks.append(mk)
    for off, action in enumerate(path_actions):
        for r0 in range(state.num_robots):
            if action[r0]:
                passengers[r0] -= 1
                if passengers[r0] < 0:
                    raise InvalidActionError(f"path deploys robot {r0 + 1} too often")
                mk = mask_tbl[r0][state.stage - 1 + off]
                if mk:
                    conf_masks.append(mk)
    return passengers, conf_masks


def ssap_rollout(state: SearchState, path_actions, sampled_future, overlaps: OverlapSet,
                 thresholds: ThresholdTable) -> list[JointAction]:
    """Complete an action sequence with the conflict-adjusted threshold policy.

    ``path_actions`` are the already-fixed joint actions for stages
    j..j+len-1 (the tree path); ``sampled_future[r0]`` holds sampled rewards
    for stages j+1..N. Returns the full feasible sequence (A_j..A_N).
    """
    _check_state(state)
    r, n, j = state.num_robots, state.num_stages, state.stage
    index = ConflictIndex(overlaps, r, n)
    suffix = _suffix_valid(state.validity)
    passengers, conf_masks = _apply_path(state, path_actions, index.mask_table)
    obs_cur = [state.observed[r0][j - 1] for r0 in range(r)]
    deploys = _ssap_complete(
        j + len(path_actions), passengers, conf_masks, sampled_future, obs_cur, j,
        state.validity, suffix, index.mask_table, thresholds.rows, n,
    )
    return _deploys_to_actions(state, path_actions, deploys)


def random_rollout(state: SearchState, path_actions, rng: _pyrandom.Random) -> list[JointAction]:
    """Complete an action sequence uniformly among feasible joint actions."""
    _check_state(state)
    suffix = _suffix_valid(state.validity)
    passengers = list(state.passengers_remaining)
    for action in path_actions:
        for r0 in range(state.num_robots):
            if action[r0]:
                passengers[r0] -= 1
    deploys = _random_complete(
        state.stage + len(path_actions), passengers, state.validity, suffix, rng,
        state.num_stages,
    )
    return _deploys_to_actions(state, path_actions, deploys)


def run_search(state: SearchState, prior: RewardPrior, overlaps: OverlapSet,
               thresholds: ThresholdTable | None, config: PlannerConfig) -> SearchNode:
    """Run the configured number of search iterations; returns the root node.

    The root's children carry the statistics used for action extraction.
    Deterministic in (state, config): sampling uses a generator seeded from
    (config.seed, state.stage).
    """
    _check_state(state)
    r = state.num_robots
    n = state.num_stages
    j = state.stage
    use_ssap = config.rollout == "ssap"
    if use_ssap:
        if thresholds is None:
            raise ValueError("ssap rollout needs a threshold table")
        if thresholds.n_max < n:
            raise ValueError(f"threshold table covers n<= {thresholds.n_max}, need {n}")
        rows = thresholds.rows
    else:
        rows = None

    valid = state.validity
    suffix = _suffix_valid(valid)
    mask_tbl = ConflictIndex(overlaps, r, n).mask_table
    obs_cur = [state.observed[r0][j - 1] for r0 in range(r)]

    # Committed (pre-root) deployments: constant value for unconflicted ones,
    # (value, mask) entries for conflicted ones.
    past_const = 0.0
    past_flagged: list[tuple[float, int]] = []
    past_conf_masks: list[int] = []
    for s0, action in enumerate(state.past_actions):
        for r0 in range(r):
            if action[r0]:
                x = state.observed[r0][s0]
                if x is None:
                    raise InvalidActionError(
                        f"past action deploys robot {r0 + 1} at invalid stage {s0 + 1}"
                    )
                mk = mask_tbl[r0][s0]
                if mk:
                    past_flagged.append((float(x), mk))
                    past_conf_masks.append(mk)
                else:
                    past_const += float(x)

    nprng = np.random.default_rng(np.random.SeedSequence([config.seed, j]))
    pyrng = _pyrandom.Random(int(nprng.integers(1 << 62)))

    n_fut = n - j
    empty_sam = [[] for _ in range(r)]
    sam_buf: list = []
    sam_pos = 0

    def next_sam():
        nonlocal sam_buf, sam_pos
        if n_fut == 0:
            return empty_sam
        if sam_pos >= len(sam_buf):
            sam_buf = prior.sample(nprng, size=(_SAMPLE_BLOCK, r, n_fut)).tolist()
            sam_pos = 0
        out = sam_buf[sam_pos]
        sam_pos += 1
        return out

    memo: dict = {}

    def options_for(stage, passengers):
        key = (stage, passengers)
        got = memo.get(key)
        if got is None:
            got = _joint_options(stage, passengers, valid, suffix)
            memo[key] = got
        return got

    root = SearchNode(0, j - 1, None, state.passengers_remaining,
                      list(options_for(j, state.passengers_remaining)))
    if not root.untried:
        raise InfeasibleScenarioError("no feasible joint action at the current stage")

    c = config.exploration_c
    scale = config.scale
    n_samples = config.samples_per_rollout
    log = math.log
    sqrt = math.sqrt

    for _ in range(config.iterations):
        node = root
        path_deps: list[tuple[int, int]] = []
        # Selection: descend fully-expanded nodes by UCT.
        while not node.untried:
            ch = node.children
            if not ch:
                break
            ln_t = log(node.visits)
            best = None
            best_score = -INF
            for cand in ch:
                score = cand.mean + c * sqrt(ln_t / cand.visits)
                if score > best_score:
                    best_score = score
                    best = cand
            node = best
            if node.deploys:
                path_deps.extend(node.deploys)
        # Expansion: attach one untried feasible action, chosen uniformly.
        unt = node.untried
        if unt:
            bits, npass = unt.pop(pyrng.randrange(len(unt)))
            stage = node.stage + 1
            child = SearchNode(
                bits, stage, node, npass,
                list(options_for(stage + 1, npass)) if stage < n else [],
            )
            node.children.append(child)
            node = child
            if node.deploys:
                path_deps.extend(node.deploys)

        # Rollout + evaluation (possibly averaged over several realizations).
        acc = 0.0
        stage_from = node.stage + 1
        for _s in range(n_samples):
            sam = next_sam()
            if use_ssap:
                cm = list(past_conf_masks)
                for r0, s in path_deps:
                    mk = mask_tbl[r0][s - 1]
                    if mk:
                        cm.append(mk)
                deps = _ssap_complete(stage_from, node.passengers, cm, sam, obs_cur,
                                      j, valid, suffix, mask_tbl, rows, n)
            else:
                deps = _random_complete(stage_from, node.passengers, valid, suffix,
                                        pyrng, n)
            total = past_const
            entries = list(past_flagged)
            for r0, s in path_deps:
                v = obs_cur[r0] if s == j else sam[r0][s - j - 1]
                mk = mask_tbl[r0][s - 1]
                if mk:
                    entries.append((v, mk))
                else:
                    total += v
            for r0, s in deps:
                v = sam[r0][s - j - 1]
                mk = mask_tbl[r0][s - 1]
                if mk:
                    entries.append((v, mk))
                else:
                    total += v
            acc += total + evaluate_entries(entries)

        backpropagate(node, acc / n_samples / scale)
    return root


def extract_best_action(root: SearchNode, num_robots: int) -> JointAction:
    """Root child with the highest mean reward; ties by visits, then encoding."""
    best = None
    key = (-INF, -1, 0)
    for ch in root.children:
        k = (ch.mean, ch.visits, -ch.action_bits)
        if k > key:
            key = k
            best = ch
    if best is None:
        raise InfeasibleScenarioError("search produced no expanded children")
    return _decode(best.action_bits, num_robots)


def plan_step(state: SearchState, prior: RewardPrior, overlaps: OverlapSet,
              thresholds: ThresholdTable | None, config: PlannerConfig) -> JointAction:
    """One online planning step: search, then return the best root joint action."""
    root = run_search(state, prior, overlaps, thresholds, config)
    return extract_best_action(root, state.num_robots)
