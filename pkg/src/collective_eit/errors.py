"""Exception and warning types shared across the package."""


class CollectiveEITError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CollectiveEITError, ValueError):
    pass


class InvalidConfigurationError(CollectiveEITError, ValueError):
    pass


class InvalidDataError(CollectiveEITError, ValueError):
    pass


class SolverFailureError(CollectiveEITError, RuntimeError):
    """A linear solve finished but its residual is above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AmbiguityError(SolverFailureError):
    """The Liouvillian has more than one stationary state."""


class StiffnessError(CollectiveEITError, RuntimeError):
    pass


class ConvergenceError(CollectiveEITError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(CollectiveEITError, ZeroDivisionError):
    pass


class NoDipError(CollectiveEITError, ValueError):
    pass


class FitFailureError(CollectiveEITError, RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SuperluminalRegimeError(CollectiveEITError, ValueError):
    pass


class ScanPointError(CollectiveEITError, RuntimeError):
    """Wraps a solver error raised at one point of a detuning scan."""

    def __init__(self, index, delta1, cause):
        super().__init__(f"grid point {index} (delta1={delta1!r}): {cause}")
        self.index = index
        self.delta1 = delta1
        self.cause = cause


class ResolutionWarning(UserWarning):
    pass


class BoundaryPeakWarning(UserWarning):
    pass
