"""Exact-penalty reformulation of equality-constrained problems over closed
convex sets, solved with projection-based first-order methods."""

from .sets import (
    DEFAULT_TOL,
    Box,
    ConvexSet,
    DimensionMismatch,
    DomainViolation,
    LinearInequalities,
    NonnegOrthant,
    NormBall,
    Product,
    PsdCone,
    PsdSpectralBall,
    SecondOrderCone,
    Simplex,
    SpectralBall,
    set_from_json,
)
from .mappings import (
    CapabilityError,
    ConstraintMap,
    DissolvingMap,
    PenaltyProblem,
    aq_vjp_analytic,
    aq_vjp_fd,
    build_aq,
    closed_form_map,
    empty_constraint_map,
    h_grad,
    h_value,
)
from .solvers import (
    SolveResult,
    SolverConfig,
    feasibility_measure,
    kkt_residual_original,
    pg_bb,
    projected_gradient,
    solve,
    stationarity_measure,
)
from .diagnostics import (
    CheckReport,
    assumption_a_check,
    grad_check,
    local_error_bound_probe,
    pi_sigma,
    probe_held_radius,
)
from .problems import (
    ProblemInstance,
    build_problem,
    feasible_points,
    gen_fpca,
    gen_npca,
    gen_qpb,
    near_feasible_points,
    reference_small_oracle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
