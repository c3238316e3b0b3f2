"""Constrained Stein variational trajectory optimization over reduced-rank GP priors."""

from .constraints import (
    ConstraintEval,
    KktSolution,
    SlackState,
    csvgd_step,
    csvn_kkt_solve,
    init_slack,
    nullspace_projection,
    slack_kkt_solve,
    solve_kkt_with_retry,
)
from .errors import ConfigError, NumericalError, ScenarioError, SchurSingularError
from .gp_prior import (
    BoundaryCondition,
    HsgpSpec,
    JointGpPrior,
    Observation,
    TimeGrid,
    basis_function,
    build_joint_prior,
    condition_prior,
    integrated_basis,
    joint_covariance,
    prior_quadratic_form,
    restrict_prior,
    sample_prior,
    spectral_density,
    velocity_kernel,
)
from .planners import (
    BaselinePriorSpec,
    PlannerConfig,
    PlanResult,
    count_trajectory_clusters,
    iterations_to_reach,
    plan,
    plan_chomp,
    plan_csvgd,
    plan_csvn,
    plan_gpmp,
    select_best,
    trajectory_metrics,
)
from .problems import (
    GaussianEllipseProblem,
    ProblemSpec,
    Scene2D,
    TrajectoryProblem,
    TrajectoryView,
    obstacle_cost,
    sdf_with_gradient,
    signed_distance,
)
from .stein import (
    SteinState,
    TrajectoryKernelSpec,
    all_directions,
    all_hessians,
    anneal_scale,
    bfgs_init,
    bfgs_update,
    build_stein_state,
    calibrate_lengthscales,
    ksd,
    svgd_direction,
    svn_block_hessian,
    trajectory_kernel,
)

__all__ = [
    "ConfigError",
    "NumericalError",
    "ScenarioError",
    "SchurSingularError",
    "BoundaryCondition",
    "HsgpSpec",
    "JointGpPrior",
    "Observation",
    "TimeGrid",
    "basis_function",
    "build_joint_prior",
    "condition_prior",
    "integrated_basis",
    "joint_covariance",
    "prior_quadratic_form",
    "restrict_prior",
    "sample_prior",
    "spectral_density",
    "velocity_kernel",
    "SteinState",
    "TrajectoryKernelSpec",
    "all_directions",
    "all_hessians",
    "anneal_scale",
    "bfgs_init",
    "bfgs_update",
    "build_stein_state",
    "calibrate_lengthscales",
    "ksd",
    "svgd_direction",
    "svn_block_hessian",
    "trajectory_kernel",
    "ConstraintEval",
    "KktSolution",
    "SlackState",
    "csvgd_step",
    "csvn_kkt_solve",
    "init_slack",
    "nullspace_projection",
    "slack_kkt_solve",
    "solve_kkt_with_retry",
    "GaussianEllipseProblem",
    "ProblemSpec",
    "Scene2D",
    "TrajectoryProblem",
    "TrajectoryView",
    "obstacle_cost",
    "sdf_with_gradient",
    "signed_distance",
    "BaselinePriorSpec",
    "PlannerConfig",
    "PlanResult",
    "count_trajectory_clusters",
    "iterations_to_reach",
    "plan",
    "plan_chomp",
    "plan_csvgd",
    "plan_csvn",
    "plan_gpmp",
    "select_best",
    "trajectory_metrics",
]

__version__ = "0.1.0"
