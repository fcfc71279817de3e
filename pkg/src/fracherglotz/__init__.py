"""Fractional-order variational problems of Herglotz type.

Numerical left/right Riemann-Liouville and Caputo operators on uniform
grids, the ODE-defined Herglotz functional with stationarity and
transversality residuals, a truncated-expansion reduction with a shooting
solver, and Noether-type conserved-quantity verification.
"""

from .exprlang import (
    ArityError,
    Dual,
    EvalPoint,
    ExprDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    diff_expr,
    evaluate,
    format_expr,
    parse,
    partials,
)
from .expansion import (
    ComparisonTable,
    DimensionError,
    ExpansionSpec,
    NoBracketError,
    ReducedLagrangian,
    ShootingResult,
    SolverSettings,
    StiffnessError,
    build_reduced_lagrangian,
    caputo_expansion,
    emit_comparison,
    self_consistency_residual,
    solve_problem,
    solve_reduced_herglotz,
)
from .fracops import (
    DifferintegralOrder,
    FractionalOrder,
    MissingDerivativeError,
    OrderRangeError,
    PoleError,
    UnsupportedOrderError,
    binom_frac,
    digamma,
    gamma,
    ibp_defect,
    left_caputo_deriv,
    left_rl_integral,
    rgamma,
    right_caputo_deriv,
    right_rl_differintegral,
    right_rl_integral,
    trigamma,
)
from .herglotz import (
    BoundaryViolationError,
    HerglotzProblem,
    NoFreeEndpointError,
    ResidualReport,
    Trajectory,
    VariationReport,
    compute_lambda,
    directional_derivative,
    el_residual,
    functional_value,
    higher_order_el_residual,
    higher_order_transversality,
    solve_z,
    transversality_residual,
)
from .noether import (
    ConservedQuantity,
    InvarianceReport,
    SymmetryViolationError,
    TransformationFamily,
    constant_of_motion,
    d_alpha_bracket,
    invariance_check,
    noether_residual,
    stationary_shift_trajectory,
)
from .problems import (
    ConfigError,
    LagrangianDef,
    ProblemDefinition,
    TrajectorySpec,
    UnknownProblemError,
    builtin_problem,
    builtin_problem_names,
    load_problem_file,
    load_solver_options,
    make_trajectory,
)
from .sampling import Grid, GridMismatchError, SampledFunction

__version__ = "0.1.0"
