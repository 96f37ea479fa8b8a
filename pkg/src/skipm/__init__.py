"""Long-step interior-point LP solver with randomized sketching
preconditioners and exact inexactness correction.

Solves min c'x s.t. Ax = b, x >= 0 (and its dual) with feasible or
infeasible long-step path following. Each Newton step's normal equations
AD^2A' dy = p are solved approximately by preconditioned CG or Chebyshev
iteration, where the preconditioner comes from a randomized sketch ADW,
and the approximation error is folded back into an exactly-computed
perturbation v so the usual IPM invariants hold verbatim.
"""

from .errors import (
    Breakdown,
    DegenerateRow,
    DimensionMismatch,
    EmptyDataset,
    Infeasible,
    InvalidDensity,
    InvalidDims,
    InvalidZeta,
    InvariantViolated,
    MaxIterations,
    NeighborhoodViolated,
    NonpositivePoint,
    NonpositiveScaling,
    NotPositiveDefinite,
    ParseError,
    RankDeficient,
    Singular,
    SkipmError,
    StaleFactor,
    TooLarge,
    TooLargeForDiagnostic,
    Unbounded,
    ZeroRow,
)
from .ipm_core import (
    IpmIterate,
    IpmParams,
    SolveReport,
    StepRecord,
    default_start,
    duality_measure,
    feasible_start,
    in_neighborhood,
    make_iterate,
    phase1_point,
    solve,
)
from .lp_model import (
    LinearProgram,
    SvmDataset,
    SvmLpMapping,
    extract_svm_solution,
    load_libsvm,
    load_matrix_market,
    make_lp,
    phase1_lp,
    random_feasible_lp,
    random_lp,
    save_matrix_market,
    svm_to_lp,
)
from .oracle_bench import (
    BenchRow,
    condition_number,
    reference_simplex,
    run_comparison,
    synthetic_suite,
)

__version__ = "0.1.0"

__all__ = [
    "Breakdown",
    "DegenerateRow",
    "DimensionMismatch",
    "EmptyDataset",
    "Infeasible",
    "InvalidDensity",
    "InvalidDims",
    "InvalidZeta",
    "InvariantViolated",
    "MaxIterations",
    "NeighborhoodViolated",
    "NonpositivePoint",
    "NonpositiveScaling",
    "NotPositiveDefinite",
    "ParseError",
    "RankDeficient",
    "Singular",
    "SkipmError",
    "StaleFactor",
    "TooLarge",
    "TooLargeForDiagnostic",
    "Unbounded",
    "ZeroRow",
    "IpmIterate",
    "IpmParams",
    "SolveReport",
    "StepRecord",
    "default_start",
    "duality_measure",
    "feasible_start",
    "in_neighborhood",
    "make_iterate",
    "phase1_point",
    "solve",
    "LinearProgram",
    "SvmDataset",
    "SvmLpMapping",
    "extract_svm_solution",
    "load_libsvm",
    "load_matrix_market",
    "make_lp",
    "phase1_lp",
    "random_feasible_lp",
    "random_lp",
    "save_matrix_market",
    "svm_to_lp",
    "BenchRow",
    "condition_number",
    "reference_simplex",
    "run_comparison",
    "synthetic_suite",
    "__version__",
]
