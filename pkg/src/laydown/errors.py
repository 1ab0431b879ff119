"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LaydownError(Exception):
    exit_code = 3


class ConfigError(LaydownError, ValueError):
    exit_code = 1


class PreconditionError(LaydownError, ValueError):
    """A hypothesis or parameter-domain condition is violated."""

    exit_code = 2


class InfeasibleError(PreconditionError):
    """The constant chain yields no positive rate for the requested parameters."""


class NumericalError(LaydownError, RuntimeError):
    """Non-convergence or a non-finite state.

    ``history`` keeps whatever trace the failing routine collected
    (residuals, iterates, a time series).
    """

    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
