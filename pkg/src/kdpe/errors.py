"""Exception types shared across the package."""


class KdpeError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateRotation(KdpeError):
    """A 6D rotation input cannot be orthonormalized (corrupt policy output)."""


class EmptySupport(KdpeError):
    """A density query was made against an empty support set."""


class StepOutOfRange(KdpeError):
    """A scored step index falls outside the trajectory horizon."""


class FormatError(KdpeError):
    """Malformed population bytes: bad magic, version, shape, or truncation."""


class ValidationError(KdpeError, ValueError):
    """Scalars violate basic invariants (NaN or Inf, invalid rotation)."""


class IoFailure(KdpeError):
    """Reading from or writing to a population source/sink failed."""


class InvalidSpec(KdpeError):
    """A mixture specification is inconsistent."""
