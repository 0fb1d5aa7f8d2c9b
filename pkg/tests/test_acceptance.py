"""Acceptance suite: one check per shipped claim, one printed verdict line each.

The sweep-style checks (4 and 5) replay the benchmark protocol at full trial
counts and dominate the runtime (the whole module takes roughly an hour on
one core). Master seeds are fixed a priori; every check is deterministic
apart from the wall-clock measurements.

Run with: pytest tests/test_acceptance.py -v -s
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from marsupial.bench import cell_lookup, pooled_sem, run_experiment
from marsupial.conflict import make_overlap_set
from marsupial.mcts import (DEFAULT_EXPLORATION, PlannerConfig, SearchState,
                            normalization_scale, plan_step, run_search)
from marsupial.oracle import open_loop_action_values, single_robot_dp
from marsupial.policies import make_planner
from marsupial.prior import explicit_prior, poisson_prior
from marsupial.sim import (generate_poisson_scenario, load_scenario,
                           run_episode, save_scenario)
from marsupial.ssap import compute_thresholds, policy_value_single_robot

MASTER_SEED = 20260810
BERN = explicit_prior([0, 1], [0.5, 0.5])
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def dp_value_table(prior, n_max, d_max):
    """Independent backward-induction optimum (no thresholds involved)."""
    mean = prior.mean()
    v = [[0.0] * (d_max + 1)]
    for n in range(1, n_max + 1):
        row = [0.0] * (d_max + 1)
        for k in range(1, d_max + 1):
            if k >= n:
                row[k] = n * mean
                continue
            acc = 0.0
            for x, p in zip(prior.support, prior.probs):
                dep = x + v[n - 1][k - 1]
                stay = v[n - 1][k]
                acc += p * (dep if dep > stay else stay)
            row[k] = acc
        v.append(row)
    return v


def seeded_prior_family(count=50, max_size=5, seed=MASTER_SEED):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        size = int(rng.integers(1, max_size + 1))
        support = np.sort(rng.uniform(0.0, 10.0, size=size))
        while len(set(support.tolist())) != size:
            support = np.sort(rng.uniform(0.0, 10.0, size=size))
        weights = rng.uniform(0.05, 1.0, size=size)
        out.append(explicit_prior(support.tolist(), (weights / weights.sum()).tolist()))
    return out


def fig2_config(**overrides):
    doc = {
        "name": "acceptance",
        "strategies": ["mcts-ssap", "mcts-random", "single-robot-ssap", "random"],
        "R": 4, "N": 10, "D": 3,
        "prior": {"poisson": {"lambda": 4.0}},
        "sweep": {"param": "num_overlaps", "values": [0, 10]},
        "trials": 50,
        "iterations": 10_000,
        "seed": MASTER_SEED,
    }
    doc.update(overrides)
    return doc


def test_1_single_robot_policy_matches_dp_optimum():
    t0 = time.perf_counter()
    worst = 0.0
    priors = seeded_prior_family(50)
    for prior in priors:
        table = dp_value_table(prior, 6, 6)
        for n in range(1, 7):
            for d in range(1, n + 1):
                got = policy_value_single_robot(prior, n, d)
                worst = max(worst, abs(got - table[n][d]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    report(1, "threshold policy equals DP optimum",
           ok, f"max |diff| {worst:.2e} over {len(priors)} priors, N<=6; {elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_2_threshold_unit_values():
    worst = 0.0
    priors = seeded_prior_family(50) + [poisson_prior(1.0), poisson_prior(2.0),
                                        poisson_prior(4.0), BERN]
    for prior in priors:
        t = compute_thresholds(prior, 2)
        worst = max(worst, abs(t.threshold(1, 2) - prior.mean()))
    t3 = compute_thresholds(BERN, 3)
    d13 = abs(t3.threshold(1, 3) - 0.25)
    d23 = abs(t3.threshold(2, 3) - 0.75)
    ok = worst <= 1e-9 and d13 <= 1e-9 and d23 <= 1e-9
    report(2, "threshold unit values", ok,
           f"max |a(1,2)-mean| {worst:.2e}; Bernoulli row3 diffs {d13:.2e}/{d23:.2e}")
    assert ok


def test_3_search_converges_to_open_loop_optimum():
    t0 = time.perf_counter()
    overlaps = make_overlap_set([[(1, 1), (2, 1)]])
    state = SearchState(
        stage=1, passengers_remaining=(1, 1), past_actions=(),
        observed=((1.0,), (1.0,)), validity=((True,) * 3, (True,) * 3))
    values = open_loop_action_values(state, BERN, overlaps)
    best = max(values.values())
    table = compute_thresholds(BERN, 3)
    hits = 0
    for seed in range(100):
        cfg = PlannerConfig(iterations=50_000, scale=1.0, seed=seed)
        action = plan_step(state, BERN, overlaps, table, cfg)
        if abs(values[action] - best) <= 1e-9:
            hits += 1
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 120.0
    report(3, "convergence to open-loop optimum", ok,
           f"{hits}/100 runs optimal; {elapsed:.0f}s")
    assert hits >= 95
    assert elapsed < 120.0


def test_4_overlap_sweep_orderings():
    t0 = time.perf_counter()
    res = run_experiment(fig2_config())
    lines = []
    checks = []
    for sv in (0, 10):
        cells = {s: cell_lookup(res, sv, s) for s in
                 ("mcts-ssap", "mcts-random", "single-robot-ssap", "random")}
        lines.append(
            f"overlaps={sv}: " + " ".join(
                f"{s}={cells[s]['mean_reward']:.1f}±{cells[s]['sem']:.2f}"
                for s in cells))
        rb = cells["random"]
        for s in ("mcts-ssap", "mcts-random", "single-robot-ssap"):
            gap = cells[s]["mean_reward"] - rb["mean_reward"]
            need = 3 * pooled_sem(cells[s]["sem"], rb["sem"])
            checks.append((f"{s} > random by 3 sems at {sv}", gap >= need, gap, need))
    c10 = {s: cell_lookup(res, 10, s) for s in
           ("mcts-ssap", "mcts-random", "single-robot-ssap")}
    gap_srs = c10["mcts-ssap"]["mean_reward"] - c10["single-robot-ssap"]["mean_reward"]
    need_srs = pooled_sem(c10["mcts-ssap"]["sem"], c10["single-robot-ssap"]["sem"])
    checks.append(("mcts-ssap > single-robot at 10", gap_srs >= need_srs, gap_srs, need_srs))
    gap_rr = c10["mcts-ssap"]["mean_reward"] - c10["mcts-random"]["mean_reward"]
    need_rr = pooled_sem(c10["mcts-ssap"]["sem"], c10["mcts-random"]["sem"])
    checks.append(("mcts-ssap >= mcts-random at 10", gap_rr >= need_rr, gap_rr, need_rr))
    elapsed = time.perf_counter() - t0
    ok = all(c[1] for c in checks) and elapsed < 1800.0
    detail = "; ".join(f"{c[0]}: {c[2]:+.2f} vs {c[3]:.2f}" for c in checks)
    report(4, "overlap sweep orderings", ok,
           f"{' | '.join(lines)}; {detail}; {elapsed:.0f}s")
    for name, passed, gap, need in checks:
        assert passed, f"{name}: gap {gap:.2f} < required {need:.2f}"
    assert elapsed < 1800.0


def test_5_robot_scaling_orderings():
    t0 = time.perf_counter()
    res = run_experiment(fig2_config(
        sweep={"param": "R", "values": [2, 4, 6]}, num_overlaps=10,
        strategies=["mcts-ssap", "mcts-random", "single-robot-ssap"]))
    checks = []
    lines = []
    for rv in (2, 4, 6):
        cells = {s: cell_lookup(res, rv, s) for s in
                 ("mcts-ssap", "mcts-random", "single-robot-ssap")}
        lines.append(f"R={rv}: " + " ".join(
            f"{s}={cells[s]['mean_reward']:.1f}±{cells[s]['sem']:.2f}" for s in cells))
        if rv in (4, 6):
            srs = cells["single-robot-ssap"]
            for s in ("mcts-ssap", "mcts-random"):
                gap = cells[s]["mean_reward"] - srs["mean_reward"]
                need = pooled_sem(cells[s]["sem"], srs["sem"])
                checks.append((f"{s} > single-robot at R={rv}", gap >= need, gap, need))
    elapsed = time.perf_counter() - t0
    ok = all(c[1] for c in checks) and elapsed < 2700.0
    detail = "; ".join(f"{c[0]}: {c[2]:+.2f} vs {c[3]:.2f}" for c in checks)
    report(5, "robot scaling orderings", ok,
           f"{' | '.join(lines)}; {detail}; {elapsed:.0f}s")
    for name, passed, gap, need in checks:
        assert passed, f"{name}: gap {gap:.2f} < required {need:.2f}"
    assert elapsed < 2700.0


def test_6_no_conflict_equivalence():
    res = run_experiment(fig2_config(
        R=1, sweep={"param": "num_overlaps", "values": [0]},
        strategies=["mcts-ssap", "single-robot-ssap"], trials=200))
    m = cell_lookup(res, 0, "mcts-ssap")["mean_reward"]
    s = cell_lookup(res, 0, "single-robot-ssap")["mean_reward"]
    rel = abs(m - s) / s
    ok = rel <= 0.02
    report(6, "no-conflict equivalence", ok,
           f"mcts {m:.3f} vs single-robot {s:.3f}; relative gap {rel:.3%} (tolerance 2%)")
    assert ok, (
        f"relative gap {rel:.3%} exceeds 2%: the search's finite-sample value "
        "estimates (subtree means under exploitation-heavy selection) sit a few "
        "percent below the optimal stopping values on conflict-free instances"
    )


def test_7_plan_step_time_linear_in_iterations():
    sc = generate_poisson_scenario(4, 10, 3, 4.0, 10, seed=MASTER_SEED)
    table = compute_thresholds(sc.prior, 10)
    state = SearchState(
        stage=1, passengers_remaining=(3,) * 4, past_actions=(),
        observed=tuple((row[0],) for row in sc.observations),
        validity=sc.validity)
    scale = normalization_scale(sc.prior)
    means = {}
    for iters, reps in ((1_000, 5), (10_000, 3), (100_000, 1)):
        ts = []
        for rep in range(reps):
            cfg = PlannerConfig(iterations=iters, scale=scale, seed=rep)
            t0 = time.perf_counter()
            plan_step(state, sc.prior, sc.overlaps, table, cfg)
            ts.append(time.perf_counter() - t0)
        ts.sort()
        means[iters] = ts[len(ts) // 2]  # median damps load spikes
    slope = (sum(t * i for i, t in means.items())
             / sum(i * i for i in means))
    deviations = {i: (t - slope * i) / (slope * i) for i, t in means.items()}
    ok = all(abs(d) <= 0.25 for d in deviations.values())
    report(7, "anytime runtime linearity", ok,
           "; ".join(f"{i} iters: {means[i]*1000:.0f}ms ({deviations[i]:+.1%})"
                     for i in means))
    assert ok, f"deviation from proportional fit exceeds 25%: {deviations}"


def test_8_invariant_bundle():
    t0 = time.perf_counter()
    failures = []

    # penalty homogeneity on seeded random instances
    rng = np.random.default_rng(MASTER_SEED)
    for _ in range(20):
        sc = generate_poisson_scenario(3, 6, 2, 4.0, 3,
                                       seed=int(rng.integers(1 << 31)))
        from marsupial.conflict import evaluate_plan
        from marsupial.oracle import offline_optimal
        plan, value = offline_optimal(sc.observations, sc.overlaps, 2)
        gamma = float(rng.uniform(0.5, 3.0))
        scaled = tuple(tuple(None if x is None else gamma * x for x in row)
                       for row in sc.observations)
        if abs(evaluate_plan(scaled, plan, sc.overlaps) - gamma * value) > 1e-9 * max(1, value):
            failures.append("penalty homogeneity")
        # ties between integer-valued plans flip on float dust under scaling,
        # so compare achieved optimal values, not the tie-broken plans
        _, value2 = offline_optimal(scaled, sc.overlaps, 2)
        if abs(value2 - gamma * value) > 1e-9 * max(1.0, gamma * value):
            failures.append("offline optimum value not scale equivariant")

    # sequential revelation probe
    class Probe:
        name = "probe"
        seen = []

        def act(self, state):
            Probe.seen.append(tuple(len(row) for row in state.observed))
            action = []
            for r0 in range(state.num_robots):
                k = state.passengers_remaining[r0]
                rem = sum(1 for s in range(state.stage, state.num_stages + 1)
                          if state.validity[r0][s - 1])
                action.append(k > 0 and state.validity[r0][state.stage - 1] and k >= rem)
            return tuple(action)

    sc = generate_poisson_scenario(3, 7, 2, 4.0, 3, seed=MASTER_SEED)
    run_episode(sc, Probe())
    if Probe.seen != [(j,) * 3 for j in range(1, 8)]:
        failures.append("sequential revelation")

    # feasibility of all emitted plans + episode determinism under seeds
    for strategy in ("mcts-ssap", "mcts-random", "single-robot-ssap", "random"):
        cfg = PlannerConfig(iterations=400, scale=normalization_scale(sc.prior),
                            seed=11)
        r1 = run_episode(sc, make_planner(strategy, sc.info(), cfg))
        r2 = run_episode(sc, make_planner(strategy, sc.info(), cfg))
        if r1.plan != r2.plan or r1.total_reward != r2.total_reward:
            failures.append(f"determinism ({strategy})")
        if any(len(row) != 2 for row in r1.plan.stages):
            failures.append(f"plan feasibility ({strategy})")

    # root visit count, tree size, value range
    table = compute_thresholds(sc.prior, 7)
    state = SearchState(stage=1, passengers_remaining=(2, 2, 2), past_actions=(),
                        observed=tuple((row[0],) for row in sc.observations),
                        validity=sc.validity)
    cfg = PlannerConfig(iterations=3000, scale=normalization_scale(sc.prior), seed=5)
    root = run_search(state, sc.prior, sc.overlaps, table, cfg)
    if root.visits != 3000:
        failures.append("root visit count")
    count = 0
    vmax = 3 * 2 * max(sc.prior.support) / cfg.scale
    stack = [root]
    while stack:
        node = stack.pop()
        count += 1
        if not (0.0 <= node.mean <= vmax):
            failures.append("value range")
            break
        stack.extend(node.children)
    if count > 3001:
        failures.append("tree size bound")

    # anytime monotonicity: optimal-action frequency nondecreasing in iterations
    overlaps = make_overlap_set([[(1, 1), (2, 1)]])
    st2 = SearchState(stage=1, passengers_remaining=(1, 1), past_actions=(),
                      observed=((1.0,), (1.0,)), validity=((True,) * 3,) * 2)
    values = open_loop_action_values(st2, BERN, overlaps)
    best = max(values.values())
    t3 = compute_thresholds(BERN, 3)
    freqs = []
    for iters in (100, 1_000, 10_000):
        hits = 0
        for seed in range(100):
            a = plan_step(st2, BERN, overlaps, t3,
                          PlannerConfig(iterations=iters, scale=1.0, seed=seed))
            hits += abs(values[a] - best) <= 1e-9
        freqs.append(hits / 100)
    if not all(b >= a - 0.05 for a, b in zip(freqs, freqs[1:])):
        failures.append(f"anytime monotonicity {freqs}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 300.0
    report(8, "invariant bundle", ok,
           f"failures={failures or 'none'}; optimal-action freqs {freqs}; {elapsed:.0f}s")
    assert not failures, failures
    assert elapsed < 300.0


def test_9_staggered_replay_round_trip_and_margin(tmp_path):
    src = SCENARIO_DIR / "replay_staggered.json"
    sc = load_scenario(src)
    # the staggered shape: one late starter, one early terminator
    assert sc.validity[1][:3] == (False, False, False)
    assert sc.validity[2][10:] == (False, False)
    save_scenario(sc, tmp_path / "rt.json")
    rt = load_scenario(tmp_path / "rt.json")
    assert rt == sc

    scale = normalization_scale(sc.prior)
    mcts_rewards, srs_rewards = [], []
    for seed in range(50):
        cfg = PlannerConfig(iterations=5_000, scale=scale, seed=seed)
        mcts_rewards.append(
            run_episode(sc, make_planner("mcts-ssap", sc.info(), cfg)).total_reward)
        srs_rewards.append(
            run_episode(sc, make_planner("single-robot-ssap", sc.info(), cfg)).total_reward)
    n = len(mcts_rewards)
    mean_m = sum(mcts_rewards) / n
    mean_s = sum(srs_rewards) / n
    sem_m = math.sqrt(sum((x - mean_m) ** 2 for x in mcts_rewards) / (n - 1) / n)
    sem_s = math.sqrt(sum((x - mean_s) ** 2 for x in srs_rewards) / (n - 1) / n)
    gap = mean_m - mean_s
    need = pooled_sem(sem_m, sem_s)
    ok = gap >= need
    report(9, "staggered replay margin", ok,
           f"mcts {mean_m:.2f}±{sem_m:.2f} vs single-robot {mean_s:.2f}±{sem_s:.2f}; "
           f"gap {gap:+.2f} vs {need:.2f}")
    assert ok, f"gap {gap:.2f} below pooled sem {need:.2f}"
