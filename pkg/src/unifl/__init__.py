"""Uniform facility location: radius-based randomized algorithms and a trainable MPNN."""

from .errors import *  # noqa: F401,F403
from .expectation import (ExpectedCostBreakdown, expected_cost, expected_cost_grad,
                          expected_cost_of_constant_p)
from .instance import (GeneratorConfig, UniflInstance, build_instance, from_points,
                       generate_geometric, load_instance, save_instance)
from .mpnn import (Discretization, MpnnParams, TrainConfig, algorithmic_init, backward, forward,
                   size_transfer_eval, train, uniform_discretization)
from .oracle import ExactResult, bisect_radius, exact_opt, export_ilp, greedy_upper_bound
from .radius import RadiusTable, compute_radii, radii_sum_lower_bound
from .sampling import (OpeningProbabilities, Solution, eval_solution, grid_search_c,
                       monte_carlo_expected_cost, probs_recursive, probs_simple, run_recursion,
                       sample_simple)

from .estimators import MPNNFacilityLocation, RecursiveUniformFL, SimpleUniformFL

__version__ = "0.1.0"
