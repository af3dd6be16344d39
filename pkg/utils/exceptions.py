"""Custom exceptions for convecta."""


class ConvectaError(Exception):
    """Base exception for all simulation errors."""
    pass


class ConfigError(ConvectaError):
    """Exception raised for invalid scenarios or settings."""
    pass


class UncoveredBoundary(ConfigError):
    """Exception raised when a boundary face has no condition for an equation."""
    pass


class MissingInflowSurface(ConfigError):
    """Exception raised when a scenario has no diffusive inflow surface."""
    pass


class MeshError(ConvectaError):
    """Base exception for mesh construction errors."""
    pass


class NonConformingFracture(MeshError):
    """Exception raised when a fracture does not lie on grid lines or planes."""
    pass


class DegenerateFracture(MeshError):
    """Exception raised for fractures of zero length or area."""
    pass


class SolverError(ConvectaError):
    """Base exception for numerical solver failures."""
    pass


class SingularMatrix(SolverError):
    """Exception raised when an LU factorization hits a zero pivot."""
    pass


class NoConvergence(SolverError):
    """Exception raised when an iteration budget is exhausted.

    The best partial result, if any, is kept in ``partial``.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class NewtonDiverged(SolverError):
    """Exception raised when Newton iterations fail to converge."""
    pass


class MaxStepsExceeded(SolverError):
    """Exception raised when time integration exceeds the step budget."""
    pass


class NotAnEquilibrium(SolverError):
    """Exception raised when linearizing at a state that is not steady."""
    pass


class SingularAyy(SolverError):
    """Exception raised when the non-evolving block cannot be factored."""
    pass


class AnalysisError(ConvectaError):
    """Base exception for post-processing errors."""
    pass


class DimensionMismatch(AnalysisError):
    """Exception raised when vectors do not match the mesh size."""
    pass


class CountMismatch(AnalysisError):
    """Exception raised when eigenvalue lists cannot be paired."""
    pass


class IoError(ConvectaError):
    """Exception raised for file input/output errors."""
    pass
