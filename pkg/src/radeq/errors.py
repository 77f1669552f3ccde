"""Exception hierarchy shared by all radeq modules."""


class RadeqError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# geometry
class PointOutsideDomain(RadeqError, ValueError):
    pass


class NonUnitDirection(RadeqError, ValueError):
    pass


class NotOnBoundary(RadeqError, ValueError):
    pass


class UnsupportedOrder(RadeqError, ValueError):
    pass


# physics
class NonphysicalInput(RadeqError, ValueError):
    pass


class NegativeInput(NonphysicalInput):
    pass


class OutOfRange(RadeqError, ValueError):
    pass


class NegativeProfile(RadeqError, ValueError):
    pass


class NonIntegrableProfile(RadeqError, ValueError):
    pass


# transport
class SegmentLeavesDomain(RadeqError, ValueError):
    pass


class EpsilonExceedsGrid(UserWarning):
    """Warning: mollifier radius below the grid spacing, input returned unchanged."""


# scattering
class MaxPrincipleViolation(RadeqError, RuntimeError):
    pass


class TailToleranceUnreachable(RadeqError, RuntimeError):
    pass


# solver
class NoConvergence(RadeqError, RuntimeError):
    exit_code = 2


class BoundViolation(RadeqError, RuntimeError):
    exit_code = 3


# compactlab
class BadInterval(RadeqError, ValueError):
    pass


class BoundViolated(RadeqError, RuntimeError):
    exit_code = 7


# mc oracle
class SeedMissing(RadeqError, ValueError):
    pass


class DegeneratePowers(RadeqError, ValueError):
    pass


# cli / io
class ConfigInvalid(RadeqError, ValueError):
    exit_code = 4


class IoError(RadeqError, OSError):
    exit_code = 5


class MissingField(IoError):
    pass


class OracleFailure(RadeqError, RuntimeError):
    exit_code = 6
