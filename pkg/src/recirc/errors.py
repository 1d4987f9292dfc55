"""Exception hierarchy shared by the solver modules."""


class RecircError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(RecircError, ValueError):
    pass


class LayoutError(RecircError, ValueError):
    """Pump spans overlap, fall outside their side, or have zero length."""


class QueryError(RecircError, KeyError):
    """Unknown boundary tag or other lookup failure."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ScheduleError(RecircError, ValueError):
    """Pump rates outside the admissible band or with the wrong shape."""


class NumericalError(RecircError, ArithmeticError):
    """A NaN or Inf showed up in an iterate."""


class StepError(RecircError):
    """A time step failed to converge.

    ``diagnostics`` carries whatever the failing loop knew at the time.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(RecircError, ValueError):
    """Invalid configuration file; the message names the line or key."""


class OutputError(RecircError, OSError):
    """Writing results failed, or the output directory is locked by another run."""
