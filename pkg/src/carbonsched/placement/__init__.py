from .bound import lower_bound
from .exact import EXACT_CUTOFF, pareto_sweep, solve_brute_force, solve_exact
from .heuristic import HeuristicSolver, solve_heuristic, solve_round_robin
from .instances import random_problem
from .model import (
    Assignment,
    EdgeCost,
    Option,
    Placement,
    PlacementProblem,
    SolverStats,
    check_no_overlap,
    edge_cost,
    effective_duration,
    evaluate,
    media_choices,
    options_for,
)

__all__ = [
    "Assignment",
    "EXACT_CUTOFF",
    "EdgeCost",
    "HeuristicSolver",
    "Option",
    "Placement",
    "PlacementProblem",
    "SolverStats",
    "check_no_overlap",
    "edge_cost",
    "effective_duration",
    "evaluate",
    "lower_bound",
    "media_choices",
    "options_for",
    "pareto_sweep",
    "random_problem",
    "solve_brute_force",
    "solve_exact",
    "solve_heuristic",
    "solve_round_robin",
]
