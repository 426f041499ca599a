"""Exception hierarchy shared by all modules."""


class AggNashError(Exception):
    """Base class for errors raised by aggnash."""


class DimensionError(AggNashError, ValueError):
    """A strategy profile or block has the wrong shape.

    ``agent`` holds the index of the offending agent when it is known.
    """

    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class UnsupportedOperationError(AggNashError):
    """The operation is not defined for this game or trace."""


class InfeasibleSetError(AggNashError):
    """A projection target set appears to be empty."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AssumptionViolationError(AggNashError):
    """A standing assumption of the algorithm is violated by the inputs."""


class SafeguardViolationError(AggNashError):
    """A local multiplier went negative: the step sizes are misconfigured."""


class DivergenceError(AggNashError, FloatingPointError):
    """An iteration produced non-finite or exploding values.

    ``last_state`` is the last finite state and ``trace`` the partial trace.
    """

    def __init__(self, message, last_state=None, iteration=None, trace=None):
        super().__init__(message)
        self.last_state = last_state
        self.iteration = iteration
        self.trace = trace


class NoConvergenceError(AggNashError):
    """An oracle solver exhausted its iteration budget."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class ConfigError(AggNashError, ValueError):
    """An experiment, game or network document is malformed."""
