"""Global minimization of DC functions ``g - h`` over boxes via polyhedral
underestimators of ``g`` built by cutting planes and vertex enumeration."""

from .bench import BenchRow, BenchSuite, ConvergenceStudy, convergence_study, emit_table, run_suite
from .oracles import (
    EXAMPLE_IDS,
    ConvexOracle,
    DcProblem,
    DomainError,
    KnownOptimum,
    parse_problem_spec,
    registry_build,
    supporting_cut,
    validate_subgradient,
)
from .poly import (
    AffineMinorant,
    Box,
    EpigraphPoly,
    LiftedVertex,
    enumerate_vertices_bruteforce,
    init_epigraph,
    intersect_halfspace,
    max_over_box_vertices,
)
from .solver import SolveReport, bound_sandwich_check, solve, solve_direct, solve_via_approximation
from .underestimator import (
    ApproxConfig,
    ApproxResult,
    Termination,
    approximate_multi_cut,
    approximate_single_cut,
    convergence_profile,
    max_vertex_gap,
)

__version__ = "0.1.0"
