"""Exception hierarchy shared by all modules."""


class SparseDiracError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(SparseDiracError, ValueError):
    pass


class ShapeError(SparseDiracError, ValueError):
    pass


class DegenerateProfileError(ShapeError):
    pass


class DomainError(SparseDiracError, ValueError):
    pass


class GapParameterError(DomainError):
    """Spectral parameter inside the central gap (|lambda| <= 1, kappa == 0)."""


class DegenerateSolutionError(SparseDiracError, ValueError):
    pass


class IntegrationError(SparseDiracError, ArithmeticError):
    pass


class SingularParameterError(SparseDiracError, ValueError):
    pass


class InconsistentMatrixError(SparseDiracError, ValueError):
    pass


class ResolventParameterError(DomainError):
    pass


class ConfigurationError(SparseDiracError, ValueError):
    pass


class SelectionFailure(SparseDiracError, RuntimeError):
    """No admissible bump distance was found within the scan budget."""

    def __init__(self, message, best_distance=None, best_gap=None):
        super().__init__(message)
        self.best_distance = best_distance
        self.best_gap = best_gap


class ResolutionWarning(UserWarning):
    """Eigenvalues could not be separated on the requested grid."""
