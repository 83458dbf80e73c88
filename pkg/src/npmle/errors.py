"""Exception types raised across the package."""


class NpmleError(Exception):
    """Base class for all package errors."""


class NonPositiveWeight(NpmleError, ValueError):
    pass


class DuplicateLocation(NpmleError, ValueError):
    pass


class WeightSumMismatch(NpmleError, ValueError):
    pass


class AtomCountMismatch(NpmleError, ValueError):
    pass


class OrderTooLarge(NpmleError, ValueError):
    pass


class InvalidInterval(NpmleError, ValueError):
    pass


class EpsilonOutOfRange(NpmleError, ValueError):
    pass


class ExtraPointOutOfRange(NpmleError, ValueError):
    pass


class TooMuchMassDropped(NpmleError, ValueError):
    pass


class NoConvergence(NpmleError, RuntimeError):
    pass


class SupportNotInS(NpmleError, ValueError):
    pass


class SingularJacobian(NpmleError, RuntimeError):
    pass


class AtomCollision(NpmleError, RuntimeError):
    pass


class UnknownDescriptor(NpmleError, ValueError):
    pass


class RefinementExhausted(NpmleError, RuntimeError):
    """The epsilon schedule ran out without a proved certificate.

    The best report seen is kept on ``self.report``.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
