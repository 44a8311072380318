"""Optimal control of a coupled bulk/surface phase-field system.

Solvers for the nonlinear state system with a dynamic boundary condition,
its linearization, the exact-transpose adjoint, and the second-derivative
system; tracking cost with exact discrete gradients and curvature;
projected gradient descent under box control constraints; and a small CLI
for running and verifying experiments.
"""

from .errors import (
    BoundsViolationWarning,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    InvalidArgumentError,
    InvalidParameterError,
    OptimizerStalledError,
    SolverFailureError,
    UnsupportedConfigurationError,
)
from .geometry import (
    Grid,
    OperatorSet,
    TimeAxis,
    build_grid,
    build_operators,
    inner_product_bulk,
    inner_product_surf,
)
from .objective import (
    ControlProblem,
    OptimalityReport,
    adjoint_as_control,
    curvature,
    evaluate_cost,
    hinner,
    hnorm,
    optimality_report,
    projection_residual,
    reduced_gradient,
    stationarity_norm,
)
from .optimizer import (
    IterateRecord,
    MinimizeResult,
    OptimizerConfig,
    minimize,
    project_box,
)
from .pde_linear import (
    CoefficientFields,
    SteppedOperator,
    linearized_coefficients,
    linearized_operator,
    solve_adjoint,
    solve_linear,
    solve_linearized,
    solve_second_derivative,
)
from .pde_state import (
    ControlPair,
    FieldPair,
    Trajectory,
    energy,
    invariant_interval,
    solve_state,
    trajectory_space_time_norm,
    trajectory_sup_norm,
)
from .potentials import AssumptionReport, Potential, check_assumptions, eval_derivative

__version__ = "0.1.0"
