"""Exception hierarchy shared across the package."""


class TailflowError(Exception):
    """Base class for all package errors."""


class NonFiniteInputError(TailflowError, ValueError):
    """Raised when an operation receives NaN or infinite values."""

    def __init__(self, message="non-finite input"):
        super().__init__(message)


class InverseOverflowError(TailflowError, OverflowError):
    """The inverse transform would overflow float64.

    ``coordinate`` is the first offending column (or ``None`` for scalars).
    """

    def __init__(self, coordinate=None):
        self.coordinate = coordinate
        where = "" if coordinate is None else f" in coordinate {coordinate}"
        super().__init__(f"inverse overflow{where}")


class DegenerateTailError(TailflowError, ValueError):
    """Top order statistics are all tied, so the Hill estimate is zero."""

    def __init__(self, message="degenerate tail"):
        super().__init__(message)


class DivergenceError(TailflowError, FloatingPointError):
    """Training or integration produced a non-finite value."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class ScheduleError(TailflowError, ValueError):
    """A schedule quantity was requested where it is undefined."""


class StepSizeUnderflowError(TailflowError, ArithmeticError):
    """The adaptive ODE solver could not meet its tolerance."""

    def __init__(self, t, point_index):
        self.t = t
        self.point_index = point_index
        super().__init__(f"step size underflow at t={t:.6g} (point {point_index})")


class ConfigError(TailflowError, ValueError):
    """Invalid configuration; ``key_path`` names the offending entry."""

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")
