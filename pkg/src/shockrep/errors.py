"""Exception types shared across the package."""


class ShockrepError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ShockrepError, ValueError):
    """Dimension mismatch between a state/vector and the game or field."""


class DomainError(ShockrepError, ValueError):
    """Value outside the valid domain (negative weights, boundary state, ...)."""


class KindError(ShockrepError, TypeError):
    """Incompatible model kinds (e.g. matrix-entry noise on a non-matrix game)."""


class UnsupportedError(ShockrepError, ValueError):
    """Requested a combination the models are not defined for."""


class NumericsError(ShockrepError, RuntimeError):
    """Integration produced a nonfinite state; carries the failing step."""

    def __init__(self, message, step=None, last_state=None):
        super().__init__(message)
        self.step = step
        self.last_state = last_state


class ConfigError(ShockrepError, ValueError):
    """Invalid scenario configuration; names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
