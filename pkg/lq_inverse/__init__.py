"""Forward and inverse solvers for discrete-time linear-quadratic N-player games."""

__version__ = "0.1.0"

from lq_inverse.game import (CostParameters, FeedbackProfile, GameDynamics, InverseProblem, LQGame, ValueSolution,
                             best_response_gain, certify_nash, closed_loop, evaluate_cost, gare_residual,
                             is_stabilizing, solve_forward_ne, solve_stein)
from lq_inverse.model_based import mb_run, mb_step
from lq_inverse.model_free import mf_run
from lq_inverse.trajectories import NoiseConfig, Trajectory, collect_pairs
from lq_inverse.equivalence import generate_equivalent, verify_equivalent
