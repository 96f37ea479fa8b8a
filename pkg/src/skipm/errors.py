"""Exception taxonomy shared across the solver modules."""


class SkipmError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(SkipmError):
    """Operand shapes are inconsistent with the problem dimensions."""


class ZeroRow(SkipmError):
    """A constraint row has no nonzero coefficients."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"constraint row {row} is identically zero")


class InvalidDensity(SkipmError):
    """Requested fill density is outside (0, 1]."""


class EmptyDataset(SkipmError):
    """A dataset with zero samples or zero features was supplied."""


class DegenerateRow(SkipmError):
    """Phase-1 cannot start because some b_i is exactly zero."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"b[{row}] == 0: row admits no interior slack")


class ParseError(SkipmError):
    """A problem or dataset file is malformed."""


class InvalidDims(SkipmError):
    """Sketch dimensions violate 1 <= s <= w and w <= n * s."""


class NonpositiveScaling(SkipmError):
    """The column scaling d must be strictly positive."""


class TooLargeForDiagnostic(SkipmError):
    """Dense diagnostic refused: the operand exceeds the configured cap."""


class RankDeficient(SkipmError):
    """The sketched matrix ADW lost row rank (sigma_min/sigma_max below threshold)."""


class Breakdown(SkipmError):
    """CG met nonpositive curvature; the operator is not positive definite."""


class InvalidZeta(SkipmError):
    """zeta must lie in (0, 1]."""


class NotPositiveDefinite(SkipmError):
    """Cholesky factorization of the normal matrix failed."""


class TooLarge(SkipmError):
    """A dense fallback path was requested beyond its size cap."""


class NonpositivePoint(SkipmError):
    """x or s has a nonpositive entry where strict positivity is required."""


class StaleFactor(SkipmError):
    """The preconditioner factor was not built from the supplied sketch."""


class NeighborhoodViolated(SkipmError):
    """An accepted step left the central-path neighborhood."""


class InvariantViolated(SkipmError):
    """A runtime algebraic identity failed beyond its tolerance."""


class MaxIterations(SkipmError):
    """The outer iteration budget was exhausted before convergence."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class Infeasible(SkipmError):
    """The LP has no feasible point."""


class Unbounded(SkipmError):
    """The LP objective is unbounded below."""


class Singular(SkipmError):
    """Condition number undefined: smallest singular value is numerically zero."""
