"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class TaylorError(Exception):
    exit_code = 1


class ConfigError(TaylorError, ValueError):
    """Malformed or out-of-range user configuration."""

    exit_code = 2


class GeometryError(TaylorError, ValueError):
    """Boundary curve is invalid (self-intersecting, touches the axis, ...)."""

    exit_code = 3


class DomainError(GeometryError):
    """A special function was evaluated outside its domain."""


class ResonanceError(TaylorError, RuntimeError):
    """The requested lambda is numerically an eigenvalue; the solve is ill-posed."""

    exit_code = 4


class AccuracyError(TaylorError, RuntimeError):
    """A self-check (density mean, residual) exceeded its tolerance."""

    exit_code = 5


class ProximityError(GeometryError):
    """Evaluation target lies outside the domain or too close to its boundary."""
