"""Point-source control of a semilinear elliptic equation with an exponential
nonlinearity: grid tools, solvers, adjoint gradients, a proximal optimizer,
and numerical checks of the critical-mass integrability estimates."""

from .mesh import (
    DomainGrid,
    GridField,
    PointSet,
    DiracDiscretization,
    build_grid,
    build_point_set,
    zeros_field,
    constant_field,
    field_from_function,
    dirac_discretization,
    dirac_field,
    dirac_sum,
    integrate,
    integrate_ball,
    lp_norm,
    point_eval,
    point_eval_many,
    angular_mean,
    resample,
    write_field_csv,
    read_field_csv,
)
from .elliptic import (
    ShiftedLaplacian,
    LinearSolveReport,
    SolverFailure,
    cg_solve,
    dense_solve,
)
from .state import (
    CRITICAL_MASS,
    CONTINUATION_TRIGGER,
    CONTINUATION_STEP,
    ControlVector,
    ProblemSpec,
    NewtonReport,
    continuation_schedule,
    solve_state,
    state_residual,
)
from .adjoint import (
    GradientVector,
    solve_linearized,
    solve_adjoint,
    point_values,
    gradient_from_state,
    smooth_gradient,
)
from .optimizer import (
    BoxBounds,
    PathConfig,
    IterateRecord,
    StageRecord,
    KktEntry,
    KktReport,
    prox_l1,
    project_box,
    build_default_box,
    tracking_value,
    objective,
    solve_regularized,
    regularization_path,
    classify_kkt,
    verify_kkt,
)
from .analysis import (
    EstimateReport,
    ScanRecord,
    moment_bound_whole,
    moment_bound_ball,
    check_moment_bound,
    check_moment_bound_ball,
    exp_norm_bound_no_forcing,
    threshold_scan,
    fit_log_slope,
    green_unit_ball,
    check_green_bound,
)

__version__ = "0.1.0"

__all__ = [
    "DomainGrid",
    "GridField",
    "PointSet",
    "DiracDiscretization",
    "build_grid",
    "build_point_set",
    "zeros_field",
    "constant_field",
    "field_from_function",
    "dirac_discretization",
    "dirac_field",
    "dirac_sum",
    "integrate",
    "integrate_ball",
    "lp_norm",
    "point_eval",
    "point_eval_many",
    "angular_mean",
    "resample",
    "write_field_csv",
    "read_field_csv",
    "ShiftedLaplacian",
    "LinearSolveReport",
    "SolverFailure",
    "cg_solve",
    "dense_solve",
    "CRITICAL_MASS",
    "CONTINUATION_TRIGGER",
    "CONTINUATION_STEP",
    "ControlVector",
    "ProblemSpec",
    "NewtonReport",
    "continuation_schedule",
    "solve_state",
    "state_residual",
    "GradientVector",
    "solve_linearized",
    "solve_adjoint",
    "point_values",
    "gradient_from_state",
    "smooth_gradient",
    "BoxBounds",
    "PathConfig",
    "IterateRecord",
    "StageRecord",
    "KktEntry",
    "KktReport",
    "prox_l1",
    "project_box",
    "build_default_box",
    "tracking_value",
    "objective",
    "solve_regularized",
    "regularization_path",
    "classify_kkt",
    "verify_kkt",
    "EstimateReport",
    "ScanRecord",
    "moment_bound_whole",
    "moment_bound_ball",
    "check_moment_bound",
    "check_moment_bound_ball",
    "exp_norm_bound_no_forcing",
    "threshold_scan",
    "fit_log_slope",
    "green_unit_ball",
    "check_green_bound",
    "__version__",
]
