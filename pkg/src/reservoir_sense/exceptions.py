class ReservoirSenseError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ReservoirSenseError, ValueError):
    pass


class ResonanceError(ReservoirSenseError, ValueError):
    """beta*Omega/(2*pi) sits on a positive integer (Matsubara resonance)."""


class UnstableParametersError(ReservoirSenseError, ValueError):
    pass


class ToleranceError(ReservoirSenseError, RuntimeError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class IllConditionedError(ReservoirSenseError, ArithmeticError):
    """Covariance derivative leaves the numerical range of the QFI metric."""


class RecurrenceError(ReservoirSenseError, ValueError):
    pass


class ConfigError(ReservoirSenseError, ValueError):
    pass
