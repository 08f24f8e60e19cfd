"""Option selection by model-predictive lookahead.

Each option carries a learned dynamics model; the planner rolls every
applicable option forward, scores the predicted end states with a
demonstration-learned progress heuristic, and executes the best one.
"""

from dynoplan.goal import GoalFitConfig, GoalHeuristic, fit_goal_heuristic, monotonicity_score
from dynoplan.options import OptionSpec, execute_option, indicator_initiation, rollout
from dynoplan.planner import PlannerConfig, PlanTrace, plan_execute, score_option, select_option
from dynoplan.regions import EmConfig, GaussianMixtureRegions, fit_gmm, option_likelihood, region_overlap
from dynoplan.state import StateSpace, StateVector
from dynoplan.trajectory import Trajectory, TrajectoryStep, read_trajectories, write_trajectories

__version__ = "0.1.0"

__all__ = [
    "EmConfig", "GaussianMixtureRegions", "GoalFitConfig", "GoalHeuristic", "OptionSpec", "PlanTrace",
    "PlannerConfig", "StateSpace", "StateVector", "Trajectory", "TrajectoryStep", "execute_option",
    "fit_gmm", "fit_goal_heuristic", "indicator_initiation", "monotonicity_score", "option_likelihood",
    "plan_execute", "read_trajectories", "region_overlap", "rollout", "score_option", "select_option",
    "write_trajectories",
]
