"""Exception types shared across the package."""


class PlmrError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(PlmrError):
    pass


class EmptyBasisError(PlmrError):
    """All candidate basis columns were dropped during orthonormalization."""


class FactorizationBreakdownError(PlmrError):
    """LDL^T elimination hit an irreparable zero pivot block."""

    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"zero pivot block at index {pivot_index}")


class RayleighDomainError(PlmrError):
    """x*T(mu)x has no sign change on J: x is outside the Rayleigh functional domain."""


class DegenerateNormalizationError(PlmrError):
    """|x*T'(rho)x| is numerically zero; the eigenpair cannot be normalized."""


class DefiniteTypeError(PlmrError):
    """The interval does not satisfy the definite-type certificate."""


class StabilizationDegenerateError(PlmrError):
    """Z*M^{-1}Z is numerically singular; projected preconditioning is unavailable."""


class ProjectedSolveError(PlmrError):
    """The projected nonlinear eigenproblem could not be solved for all eigenvalues."""
