"""Covariance steering with a Gaussian Gromov-Wasserstein terminal cost."""

from .baseline import (
    compare_gw_vs_wasserstein,
    solve_wasserstein_steering,
    sweep_lambda,
    sweep_theta,
)
from .dca import DCAConfig, DCAResult, evaluate_objective, solve_gw_steering
from .gaussian import (
    TargetShape,
    ggw_squared,
    gw_alignment_gain,
    gw_subgradient,
    principal_angle,
    rotate_covariance,
    sorted_eigendecomposition,
    trace_max_orthogonal,
    wasserstein2_squared,
)
from .subproblem import Backend, build_gw_subproblem, build_wasserstein_problem, solve_conic
from .system import (
    Policy,
    SystemParams,
    TransformedPlan,
    control_energy,
    empirical_covariance,
    propagate_policy,
    propagate_transformed,
    recover_policy,
    rollout,
)

__version__ = "0.1.0"
