"""Exception types shared across the package."""


class ShelabError(Exception):
    """Base class for all errors raised by shelab."""


class ModelDomainError(ShelabError, ValueError):
    """A function was evaluated outside the region where the operation is defined
    (zero drift under a reciprocal, division by zero in a ratio check, ...)."""


class NumericError(ShelabError, ArithmeticError):
    """A numerical procedure failed to reach its target accuracy.

    ``best_estimate`` carries whatever the procedure had when it gave up.
    """

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class ContractError(ShelabError, ValueError):
    """Caller violated a precondition (shape mismatch, non-dyadic ratio, ...)."""


class ResourceError(ShelabError, MemoryError):
    """Requested object exceeds a configured size cap."""


class ExperimentInvalid(ShelabError):
    """An experiment ran but its validity diagnostics failed (e.g. truncation leak)."""


class ExtrapolationRefused(NumericError):
    """Blowup-time extrapolation was requested for a drift whose Osgood tail diverges."""
