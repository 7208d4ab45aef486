"""Numerical checks for Pontryagin maximum-principle necessary conditions."""

from .errors import (
    AlreadyMayerError,
    ContractError,
    ContractionViolationError,
    DomainError,
    DomainExitError,
    IllConditionedResolventError,
    InvarianceViolationError,
    MalformedControlError,
    NeedleBudgetError,
    PmpError,
    ShrinkRadiusError,
    TransformInconsistencyError,
)
from .integrate import (
    BieleckiContext,
    PicardTrace,
    bielecki_norm,
    build_bielecki_context,
    estimate_lipschitz,
    estimate_needle_constant,
    solve_picard,
    solve_rk,
)
from .multiplier import (
    MultiplierSet,
    MultiplierSolution,
    StaticReduction,
    check_qualification,
    multiplier_inequality_check,
    reduce_to_static,
    solve_multiplier_rule,
)
from .needle import (
    ExpansionReport,
    NeedleSpec,
    apply_needle,
    default_needle_family,
    expansion_check,
    first_order_map,
    merge_specs,
    needle_intervals,
    perturbed_endpoint,
)
from .pmpcheck import Report, Verdict, VerifyConfig, hamiltonian, verify
from .problem import (
    AugmentedProblem,
    Box,
    Candidate,
    FiniteSet,
    ProblemSpec,
    bolza_to_mayer,
    objective_value,
    terminal_data,
    validate_jacobians,
)
from .pwfun import (
    PiecewiseControl,
    Subdivision,
    Trajectory,
    eval_control,
    merge_subdivisions,
    normalize_control,
    onesided_derivative,
)
from .resolvent import (
    Costate,
    ResolventField,
    adjoint_residual,
    build_costate,
    compute_resolvent,
    project_augmented_costate,
    propagator_direct,
)

__version__ = "0.1.0"
