"""Distributionally robust MDPs over Wasserstein ambiguity sets.

Epoch-scheduled primal-dual solver, certified value-iteration baselines,
duality-gap certificates and benchmark instances.
"""

from .ambiguity import AmbiguityConfig, KernelSet, linear_max, membership_residual
from .baselines import accelerated_vi, anderson_vi, gauss_seidel_vi, vi
from .errors import ConfigurationError, InfeasibleError, NumericalError, StructuralError
from .gap import GapReport, best_response_value, duality_gap, worst_case_value
from .instances import GarnetConfig, default_radius, forest, garnet, machine_replacement, sample_kernels
from .mdp import MdpInstance, bilinear_value, nominal_value_iteration, policy_cost
from .pda import SolverConfig, bellman_update_certified, solve, step_sizes
from .prox import project_simplex, project_simplex_box, prox_x, prox_y, solve_alpha_sweep

__all__ = [
    "AmbiguityConfig", "ConfigurationError", "GapReport", "GarnetConfig", "InfeasibleError",
    "KernelSet", "MdpInstance", "NumericalError", "SolverConfig", "StructuralError",
    "accelerated_vi", "anderson_vi", "bellman_update_certified", "best_response_value",
    "bilinear_value", "default_radius", "duality_gap", "forest", "garnet", "gauss_seidel_vi",
    "linear_max", "machine_replacement", "membership_residual", "nominal_value_iteration",
    "policy_cost", "project_simplex", "project_simplex_box", "prox_x", "prox_y",
    "sample_kernels", "solve", "solve_alpha_sweep", "step_sizes", "vi", "worst_case_value",
]
