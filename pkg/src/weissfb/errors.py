"""Exception hierarchy shared by every module of the package."""


class WeissFBError(Exception):
    """Base class for all package errors."""


class DomainError(WeissFBError, ValueError):
    """A query point, ball or circle leaves the grid hull or the admissible domain."""


class ResolutionError(WeissFBError, ValueError):
    """A requested radius or scale falls below the resolution floor of the grid."""


class ParameterError(WeissFBError, ValueError):
    """Invalid model parameters or a degenerate problem description."""


class RefusalError(WeissFBError):
    """An operation declines to run because a precondition is not met.

    ``margin`` carries the worst violation when the refusal is quantitative.
    """

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class NonConvergenceError(WeissFBError, RuntimeError):
    """The minimizer hit its iteration cap.

    The last iterate and the residual history are attached so callers can
    inspect how far the run got.
    """

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = list(history or [])
