"""Seeded experiment harness: sweeps, trials, aggregation, CSV/JSON output.

A sweep point fixes one varying parameter (overlap count or robot count);
its overlap family is drawn once and shared by every strategy and trial,
and every per-trial seed derives from (master seed, sweep index, trial
index) so results are reproducible and insensitive to which strategies
are requested.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleScenarioError, InvalidActionError, ScenarioFormatError
from .mcts import DEFAULT_EXPLORATION, PlannerConfig, normalization_scale
from .policies import STRATEGIES, STRATEGY_IDS, make_planner
from .prior import prior_from_spec
from .sim import Scenario, generate_observations, generate_overlaps, run_episode

_OVERLAP_TAG = 9001  # distinguishes the overlap stream from trial streams

CSV_COLUMNS = ("sweep_param", "strategy", "trials", "mean_reward", "sem",
               "mean_walltime_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    strategies: tuple[str, ...]
    num_robots: int
    num_stages: int
    deployments: int
    prior_spec: dict
    sweep_param: str
    sweep_values: tuple[int, ...]
    num_overlaps: int
    overlap_size: tuple[int, int]
    trials: int
    iterations: int
    exploration_c: float
    samples_per_rollout: int
    normalization_quantile: float
    seed: int
    per_trial_overlaps: bool
    timing: bool
    workers: int

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "strategies": list(self.strategies),
            "R": self.num_robots,
            "N": self.num_stages,
            "D": self.deployments,
            "prior": self.prior_spec,
            "sweep": {"param": self.sweep_param, "values": list(self.sweep_values)},
            "num_overlaps": self.num_overlaps,
            "overlap_size": list(self.overlap_size),
            "trials": self.trials,
            "iterations": self.iterations,
            "exploration_c": self.exploration_c,
            "samples_per_rollout": self.samples_per_rollout,
            "normalization_quantile": self.normalization_quantile,
            "seed": self.seed,
            "per_trial_overlaps": self.per_trial_overlaps,
            "timing": self.timing,
            "workers": self.workers,
        }


def _fail(path: str, msg: str):
    raise ScenarioFormatError(f"{path}: {msg}")


def _get_int(doc, key, default=None, minimum=None):
    v = doc.get(key, default)
    if v is None:
        _fail(key, "missing required key")
    if not isinstance(v, int) or isinstance(v, bool):
        _fail(key, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        _fail(key, f"must be >= {minimum}, got {v}")
    return v


def parse_experiment_config(doc: dict) -> ExperimentConfig:
    """Validate and normalize an experiment config document."""
    if not isinstance(doc, dict):
        _fail("$", "expected a JSON object")
    strategies = doc.get("strategies")
    if not isinstance(strategies, list) or not strategies:
        _fail("strategies", "expected a non-empty list of strategy names")
    for s in strategies:
        if s not in STRATEGIES:
            _fail("strategies", f"unknown strategy {s!r}; pick from {list(STRATEGIES)}")
    r = _get_int(doc, "R", minimum=1)
    n = _get_int(doc, "N", minimum=1)
    d = _get_int(doc, "D", minimum=1)
    if d > n:
        _fail("D", f"must be <= N={n}")
    prior_spec = doc.get("prior", {"poisson": {"lambda": 4.0}})
    prior_from_spec(prior_spec, "prior")  # validated; parsed again on use

    sweep = doc.get("sweep", {"param": "num_overlaps",
                              "values": [doc.get("num_overlaps", 0)]})
    if not isinstance(sweep, dict):
        _fail("sweep", "expected an object {param, values}")
    param = sweep.get("param")
    if param not in ("num_overlaps", "R"):
        _fail("sweep.param", f"expected 'num_overlaps' or 'R', got {param!r}")
    values = sweep.get("values")
    if (not isinstance(values, list) or not values
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0
                       for v in values)):
        _fail("sweep.values", "expected a non-empty list of non-negative integers")

    size = doc.get("overlap_size", [3, 4])
    if (not isinstance(size, list) or len(size) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in size)
            or size[0] < 2 or size[1] < size[0]):
        _fail("overlap_size", f"expected [lo, hi] with 2 <= lo <= hi, got {size!r}")

    c = doc.get("exploration_c", DEFAULT_EXPLORATION)
    if not isinstance(c, (int, float)) or isinstance(c, bool) or c < 0:
        _fail("exploration_c", f"expected a non-negative number, got {c!r}")
    q = doc.get("normalization_quantile", 0.9)
    if not isinstance(q, (int, float)) or isinstance(q, bool) or not 0 < q < 1:
        _fail("normalization_quantile", f"expected a number in (0, 1), got {q!r}")

    return ExperimentConfig(
        name=str(doc.get("name", "experiment")),
        strategies=tuple(strategies),
        num_robots=r,
        num_stages=n,
        deployments=d,
        prior_spec=prior_spec,
        sweep_param=param,
        sweep_values=tuple(values),
        num_overlaps=_get_int(doc, "num_overlaps", default=0, minimum=0),
        overlap_size=(size[0], size[1]),
        trials=_get_int(doc, "trials", minimum=1),
        iterations=_get_int(doc, "iterations", minimum=1),
        exploration_c=float(c),
        samples_per_rollout=_get_int(doc, "samples_per_rollout", default=1, minimum=1),
        normalization_quantile=float(q),
        seed=_get_int(doc, "seed", default=0, minimum=0),
        per_trial_overlaps=bool(doc.get("per_trial_overlaps", False)),
        timing=bool(doc.get("timing", True)),
        workers=_get_int(doc, "workers", default=1, minimum=1),
    )


def _point_params(cfg: ExperimentConfig, sweep_value: int) -> tuple[int, int]:
    """(num_robots, num_overlaps) at one sweep point."""
    if cfg.sweep_param == "R":
        return sweep_value, cfg.num_overlaps
    return cfg.num_robots, sweep_value


def _scenario_for_trial(cfg: ExperimentConfig, sweep_idx: int, trial_idx: int) -> Scenario:
    prior = prior_from_spec(cfg.prior_spec)
    num_robots, num_overlaps = _point_params(cfg, cfg.sweep_values[sweep_idx])
    if cfg.per_trial_overlaps:
        ov_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, sweep_idx, trial_idx, _OVERLAP_TAG]))
    else:
        ov_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, sweep_idx, _OVERLAP_TAG]))
    overlaps = generate_overlaps(num_robots, cfg.num_stages, num_overlaps,
                                 cfg.overlap_size, ov_rng)
    obs_ss = np.random.SeedSequence([cfg.seed, sweep_idx, trial_idx])
    observations = generate_observations(prior, num_robots, cfg.num_stages,
                                         np.random.default_rng(obs_ss))
    return Scenario(
        num_robots=num_robots,
        num_stages=cfg.num_stages,
        deployments_per_robot=cfg.deployments,
        observations=observations,
        overlaps=overlaps,
        prior=prior,
        seed=int(obs_ss.generate_state(1)[0]),
    )


def _planner_seed(cfg: ExperimentConfig, sweep_idx: int, trial_idx: int,
                  strategy: str) -> int:
    ss = np.random.SeedSequence(
        [cfg.seed, sweep_idx, trial_idx, STRATEGY_IDS[strategy]])
    return int(ss.generate_state(1)[0])


def _run_one(cfg: ExperimentConfig, sweep_idx: int, trial_idx: int,
             strategy: str) -> tuple[float, float]:
    """One (sweep point, trial, strategy) episode; returns (reward, walltime_s)."""
    scenario = _scenario_for_trial(cfg, sweep_idx, trial_idx)
    prior = scenario.prior
    planner_config = PlannerConfig(
        iterations=cfg.iterations,
        exploration_c=cfg.exploration_c,
        rollout="random" if strategy == "mcts-random" else "ssap",
        samples_per_rollout=cfg.samples_per_rollout,
        scale=normalization_scale(prior, cfg.normalization_quantile),
        seed=_planner_seed(cfg, sweep_idx, trial_idx, strategy),
    )
    planner = make_planner(strategy, scenario.info(), planner_config)
    result = run_episode(scenario, planner)
    return result.total_reward, result.walltime_s


def _run_one_task(args):
    cfg_doc, sweep_idx, trial_idx, strategy = args
    cfg = parse_experiment_config(cfg_doc)
    try:
        reward, wall = _run_one(cfg, sweep_idx, trial_idx, strategy)
        return sweep_idx, trial_idx, strategy, reward, wall, None
    except (InfeasibleScenarioError, InvalidActionError) as exc:
        return sweep_idx, trial_idx, strategy, math.nan, 0.0, str(exc)


def _aggregate(rewards: list[float]) -> tuple[float, float]:
    n = len(rewards)
    if n == 0:
        return math.nan, math.nan
    mean = sum(rewards) / n
    if n == 1:
        return mean, 0.0
    var = sum((x - mean) ** 2 for x in rewards) / (n - 1)
    return mean, math.sqrt(var / n)


def run_experiment(config_doc: dict, out_dir=None) -> dict:
    """Run a full sweep; returns the results document (and writes files).

    The document has one cell per (sweep value, strategy) carrying the
    per-trial rewards, their mean/sem, and mean wall time; infeasible cells
    carry an error instead of aborting the sweep.
    """
    cfg = parse_experiment_config(config_doc)
    tasks = [
        (cfg.to_json_dict(), si, ti, strategy)
        for si in range(len(cfg.sweep_values))
        for ti in range(cfg.trials)
        for strategy in cfg.strategies
    ]
    outcomes = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_run_one_task, tasks, chunksize=1))
    else:
        for task in tasks:
            outcomes.append(_run_one_task(task))

    cell_rewards: dict[tuple[int, str], list[float]] = {}
    cell_walls: dict[tuple[int, str], list[float]] = {}
    cell_errors: dict[tuple[int, str], str] = {}
    for si, ti, strategy, reward, wall, error in outcomes:
        key = (si, strategy)
        if error is not None:
            cell_errors.setdefault(key, error)
            continue
        cell_rewards.setdefault(key, []).append(reward)
        cell_walls.setdefault(key, []).append(wall)

    cells = []
    for si, sv in enumerate(cfg.sweep_values):
        for strategy in sorted(cfg.strategies):
            key = (si, strategy)
            if key in cell_errors:
                cells.append({
                    "sweep_param": sv, "strategy": strategy, "trials": 0,
                    "mean_reward": math.nan, "sem": math.nan,
                    "mean_walltime_ms": 0.0, "rewards": [], "walltimes_ms": [],
                    "error": cell_errors[key],
                })
                continue
            rewards = cell_rewards.get(key, [])
            walls = cell_walls.get(key, [])
            mean, sem = _aggregate(rewards)
            mean_wall_ms = (sum(walls) / len(walls) * 1000.0) if walls else 0.0
            if not cfg.timing:
                mean_wall_ms = 0.0
                walls = [0.0] * len(walls)
            cells.append({
                "sweep_param": sv, "strategy": strategy, "trials": len(rewards),
                "mean_reward": mean, "sem": sem,
                "mean_walltime_ms": mean_wall_ms,
                "rewards": rewards,
                "walltimes_ms": [w * 1000.0 for w in walls],
                "error": None,
            })

    results = {
        "config": cfg.to_json_dict(),
        "master_seed": cfg.seed,
        "cells": cells,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, cfg.name)
        with open(base + "_results.json", "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
            fh.write("\n")
        with open(base + "_results.csv", "w", encoding="utf-8") as fh:
            fh.write(results_to_csv(results))
        results["csv_path"] = base + "_results.csv"
        results["json_path"] = base + "_results.json"
    return results


def results_to_csv(results: dict) -> str:
    """Aggregate CSV with the config embedded as a comment header."""
    header = "# config=" + json.dumps(results["config"], separators=(",", ":"))
    lines = [header, ",".join(CSV_COLUMNS)]
    for cell in results["cells"]:
        lines.append(
            f"{cell['sweep_param']},{cell['strategy']},{cell['trials']},"
            f"{cell['mean_reward']:.6f},{cell['sem']:.6f},"
            f"{cell['mean_walltime_ms']:.3f}"
        )
    return "\n".join(lines) + "\n"


def pooled_sem(sem_a: float, sem_b: float) -> float:
    """Standard error of a difference in means (independent cells)."""
    return math.sqrt(sem_a * sem_a + sem_b * sem_b)


def cell_lookup(results: dict, sweep_value: int, strategy: str) -> dict:
    for cell in results["cells"]:
        if cell["sweep_param"] == sweep_value and cell["strategy"] == strategy:
            return cell
    raise KeyError(f"no cell for sweep={sweep_value}, strategy={strategy}")
