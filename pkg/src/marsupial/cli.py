"""Command line front end.

Verbs: generate (emit scenario files), solve (one scenario + strategy),
bench (run an experiment config), oracle (hindsight optimum of a scenario),
validate (schema-check files). Exit codes: 0 success, 1 usage error,
2 infeasible or malformed input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench as bench_mod
from .errors import (InfeasibleScenarioError, InvalidActionError,
                     InvariantError, ScenarioFormatError, SizeGuardError)
from .mcts import DEFAULT_EXPLORATION, PlannerConfig, normalization_scale
from .oracle import offline_optimal
from .policies import STRATEGIES, make_planner
from .sim import (generate_poisson_scenario, load_scenario, run_episode,
                  save_scenario)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="marsupial",
                     description="Multi-carrier deployment planning benchmark")
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("generate", help="emit seeded scenario files")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1, help="number of scenarios")
    gen.add_argument("--robots", type=int, default=4)
    gen.add_argument("--stages", type=int, default=10)
    gen.add_argument("--deploys", type=int, default=3)
    gen.add_argument("--lam", type=float, default=4.0, help="Poisson rate")
    gen.add_argument("--num-overlaps", type=int, default=10)
    gen.add_argument("--overlap-size", type=int, nargs=2, default=(3, 4),
                     metavar=("LO", "HI"))

    solve = sub.add_parser("solve", help="run one strategy on a scenario file")
    solve.add_argument("scenario", help="scenario file path")
    solve.add_argument("--strategy", choices=STRATEGIES, default="mcts-ssap")
    solve.add_argument("--iterations", type=int, default=10_000)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--exploration-c", type=float, default=DEFAULT_EXPLORATION)
    solve.add_argument("--samples-per-rollout", type=int, default=1)
    solve.add_argument("--quantile", type=float, default=0.9,
                       help="normalization quantile")
    solve.add_argument("--out", help="write the episode JSON here instead of stdout")

    ben = sub.add_parser("bench", help="run an experiment config")
    ben.add_argument("--config", required=True, help="experiment config path")
    ben.add_argument("--out", default=".", help="output directory")
    ben.add_argument("--seed", type=int, help="override the config's master seed")
    ben.add_argument("--format", choices=("csv", "json", "both"), default="both")

    orc = sub.add_parser("oracle", help="hindsight-optimal plan of a scenario")
    orc.add_argument("scenario", help="scenario file path")
    orc.add_argument("--out", help="write the oracle JSON here instead of stdout")

    val = sub.add_parser("validate", help="schema-check scenario/experiment files")
    val.add_argument("paths", nargs="+", help="files to check")
    val.add_argument("--kind", choices=("scenario", "experiment"),
                     default="scenario")
    return parser


def _emit(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_generate(args) -> int:
    import os

    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        scenario = generate_poisson_scenario(
            num_robots=args.robots,
            num_stages=args.stages,
            deployments_per_robot=args.deploys,
            rate=args.lam,
            num_overlaps=args.num_overlaps,
            overlap_size=tuple(args.overlap_size),
            seed=args.seed + i,
        )
        path = os.path.join(args.out, f"scenario_{args.seed + i:04d}.json")
        save_scenario(scenario, path)
        print(path)
    return 0


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    config = PlannerConfig(
        iterations=args.iterations,
        exploration_c=args.exploration_c,
        rollout="random" if args.strategy == "mcts-random" else "ssap",
        samples_per_rollout=args.samples_per_rollout,
        scale=normalization_scale(scenario.prior, args.quantile),
        seed=args.seed,
    )
    planner = make_planner(args.strategy, scenario.info(), config)
    result = run_episode(scenario, planner)
    _emit(result.to_json_dict(), args.out)
    return 0


def _cmd_bench(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"$: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ScenarioFormatError("$: expected a JSON object")
    if args.seed is not None:
        doc = dict(doc)
        doc["seed"] = args.seed
    results = bench_mod.run_experiment(doc, out_dir=args.out)
    if args.format == "csv":
        import os
        os.remove(results["json_path"])
        print(results["csv_path"])
    elif args.format == "json":
        import os
        os.remove(results["csv_path"])
        print(results["json_path"])
    else:
        print(results["csv_path"])
        print(results["json_path"])
    return 0


def _cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    plan, value = offline_optimal(scenario.observations, scenario.overlaps,
                                  scenario.deployments_per_robot)
    _emit({"plan": plan.to_json(), "value": value}, args.out)
    return 0


def _cmd_validate(args) -> int:
    for path in args.paths:
        if args.kind == "scenario":
            load_scenario(path)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ScenarioFormatError(f"$: not valid JSON ({exc})") from exc
            bench_mod.parse_experiment_config(doc)
        print(f"{path}: OK")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "oracle": _cmd_oracle,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.verb](args)
    except (ScenarioFormatError, InfeasibleScenarioError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, InvalidActionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
