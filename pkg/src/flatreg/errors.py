"""Exception hierarchy shared across flatreg."""


class FlatError(Exception):
    """Base class for all flatreg errors."""


class ValidationError(FlatError, ValueError):
    """Input data failed validation."""


class DimensionError(ValidationError):
    """Array shapes disagree."""


class NonFiniteError(ValidationError):
    """NaN or infinite values where finite values are required."""


class ConfigurationError(FlatError, ValueError):
    """Invalid or degenerate configuration (e.g. a singular H-tilde)."""


class ConvergenceError(FlatError, RuntimeError):
    """Coordinate descent hit ``max_sweeps`` before converging.

    The last iterate and diagnostics are kept on the exception so callers
    can inspect or reuse them.
    """

    def __init__(self, message, theta=None, sweeps=None, delta=None, objective=None):
        super().__init__(message)
        self.theta = theta
        self.sweeps = sweeps
        self.delta = delta
        self.objective = objective


class StageError(FlatError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class GridError(FlatError):
    """Every point of a tuning grid failed."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or {}


class UndefinedMetricError(FlatError, ValueError):
    """A clustering metric is undefined for the given labels."""


class NoAdmissibleClusteringError(FlatError):
    """No (eps, min_pts) grid point produced an admissible clustering."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GridGeometryError(ValidationError):
    """Locations do not form a rectilinear grid."""
