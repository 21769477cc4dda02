"""Exception hierarchy shared across the package."""


class GeomxError(Exception):
    """Base class for all geomx errors."""


class DegenerateGeometry(GeomxError):
    """Two or more sites share the same coordinates."""


class InvalidCoordinate(GeomxError):
    """Coordinate outside the valid latitude/longitude range."""


class NotPositiveDefinite(GeomxError):
    """Correlation matrix failed its Cholesky factorization.

    ``minor_index`` is the 1-based index of the offending leading minor.
    """

    def __init__(self, message: str, minor_index: int | None = None):
        super().__init__(message)
        self.minor_index = minor_index


class DomainError(GeomxError):
    """Input outside the mathematical domain of an operation."""


class NumericalError(GeomxError):
    """A numerical routine failed to converge or produced garbage."""


class Unsupported(GeomxError):
    """Operation not defined for the given configuration."""


class InsufficientData(GeomxError):
    """Too few observations to carry out the requested computation."""


class OptimizationFailed(GeomxError):
    """Every optimizer start failed; ``trace`` holds per-start diagnostics."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class NonFiniteLikelihood(GeomxError):
    """Likelihood evaluated to a non-finite value at the fitted parameters.

    ``obs_index`` points at the first offending observation.
    """

    def __init__(self, message: str, obs_index: int | None = None):
        super().__init__(message)
        self.obs_index = obs_index


class NoViableModel(GeomxError):
    """All candidate radial fits failed."""


class IntegrationFailure(GeomxError):
    """Numerical integration did not meet its tail-mass criterion."""


class MCMCDiagnosticFailure(GeomxError):
    """MCMC acceptance rate left the trusted range after adaptation."""


class ConfigError(GeomxError):
    """Invalid command-line or config-file input."""
