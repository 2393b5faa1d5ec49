"""Periodic kernel tables and bubble continuation on warped circles.

The package builds the Green kernel of a weighted periodic Sturm-Liouville
operator, splits off its explicit singular part, scans the regular part for
concentration points, and continues families of peaked solutions of the
associated semilinear problems toward their small-parameter limits.
"""

__version__ = "0.1.0"

from .core import (
    DEFAULT_SCAN,
    Grid,
    PeriodicFn,
    constant_fn,
    cumulative_inverse_table,
    exp_trig_fn,
    fourier_fn,
    grid_fn,
    min_value,
    p_norm,
    parse_fn_spec,
    quad_periodic,
    quad_segment,
    sampled_fn,
)
from .operators import (
    CoercivityFailure,
    DiscreteOperator,
    OperatorModel,
    assemble,
    coercivity_check,
    solve_cyclic,
    solve_linear,
)
from .greens import (
    GreensTables,
    gamma_eval,
    greens_matrix,
    h_boundary_check,
    h_identity_residuals,
    point_source_column,
)
from .locator import (
    ConstantV,
    CriticalPointReport,
    GenericitySample,
    V_eval,
    frechet_dH_kappa,
    frechet_residual,
    genericity_sweep,
    locate_critical,
    random_perturbation,
    sweep_fraction,
)
from .bubble import (
    BubbleParams,
    ProfileFn,
    ResolutionError,
    U_deriv,
    U_deriv2,
    U_eval,
    bubble_mass,
    eps_from_lambda,
    exp_U,
    match_eps_to_p,
    match_lambda_to_eps,
    project,
)
from .nonlinear import (
    BranchStep,
    JacobianSingular,
    NoConvergence,
    NonPositiveIterate,
    SolutionBranch,
    SolverConfig,
    continue_branch,
    exp_lambda_schedule,
    fit_eps_from_peak,
    jacobian_apply,
    newton_solve,
    pick_anchor,
    residual_exp,
    residual_power,
)

__all__ = [
    "__version__",
    "DEFAULT_SCAN",
    "Grid",
    "PeriodicFn",
    "constant_fn",
    "cumulative_inverse_table",
    "exp_trig_fn",
    "fourier_fn",
    "grid_fn",
    "min_value",
    "p_norm",
    "parse_fn_spec",
    "quad_periodic",
    "quad_segment",
    "sampled_fn",
    "CoercivityFailure",
    "DiscreteOperator",
    "OperatorModel",
    "assemble",
    "coercivity_check",
    "solve_cyclic",
    "solve_linear",
    "GreensTables",
    "gamma_eval",
    "greens_matrix",
    "h_boundary_check",
    "h_identity_residuals",
    "point_source_column",
    "ConstantV",
    "CriticalPointReport",
    "GenericitySample",
    "V_eval",
    "frechet_dH_kappa",
    "frechet_residual",
    "genericity_sweep",
    "locate_critical",
    "random_perturbation",
    "sweep_fraction",
    "BubbleParams",
    "ProfileFn",
    "ResolutionError",
    "U_deriv",
    "U_deriv2",
    "U_eval",
    "bubble_mass",
    "eps_from_lambda",
    "exp_U",
    "match_eps_to_p",
    "match_lambda_to_eps",
    "project",
    "BranchStep",
    "JacobianSingular",
    "NoConvergence",
    "NonPositiveIterate",
    "SolutionBranch",
    "SolverConfig",
    "continue_branch",
    "exp_lambda_schedule",
    "fit_eps_from_peak",
    "jacobian_apply",
    "newton_solve",
    "pick_anchor",
    "residual_exp",
    "residual_power",
]
