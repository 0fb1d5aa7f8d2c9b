"""Online deployment planning for multi-carrier marsupial robot teams."""

from .conflict import (DeploymentPlan, OverlapSet, RobotStage, evaluate_plan,
                       make_overlap_set, penalty_factor, plan_from_actions)
from .errors import (InfeasibleScenarioError, InvalidActionError, InvariantError,
                     MarsupialError, ScenarioFormatError, SizeGuardError)
from .mcts import (DEFAULT_EXPLORATION, JointAction, PlannerConfig, SearchNode,
                   SearchState, backpropagate, extract_best_action,
                   feasible_actions, normalization_scale, plan_step,
                   random_rollout, run_search, ssap_rollout, uct_score)
from .oracle import (expected_open_loop_optimum, offline_optimal,
                     open_loop_action_values, single_robot_dp)
from .policies import (STRATEGIES, MctsPlanner, RandomBaselinePlanner,
                       SingleRobotSsapPlanner, init_random_baseline, make_planner)
from .prior import (RewardPrior, explicit_prior, poisson_prior, prior_from_spec,
                    prior_to_spec)
from .sim import (EpisodeResult, Scenario, ScenarioInfo, StageRecord,
                  generate_observations, generate_overlaps,
                  generate_poisson_scenario, load_scenario, run_episode,
                  save_scenario)
from .ssap import ThresholdTable, compute_thresholds, decide, policy_value_single_robot

__version__ = "0.1.0"
