"""Exception types shared across the package."""


class CranioforgeError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CranioforgeError):
    """Shapes, lengths, or topologies do not match the expected schema."""


class InvalidInputError(CranioforgeError):
    """An argument is outside the operation's domain (empty mesh, bad value)."""


class InsufficientDataError(CranioforgeError):
    """Not enough samples to fit or summarize a model."""


class PartitionError(CranioforgeError):
    """A region partition overlaps or fails to cover the landmark schema."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = sorted(offending) if offending is not None else []


class RangeError(CranioforgeError):
    """A control value is outside its allowed interval."""

    def __init__(self, message, allowed=None):
        super().__init__(message)
        self.allowed = tuple(allowed) if allowed is not None else None


class DegenerateGeometryError(CranioforgeError):
    """A geometric configuration is rank-deficient (collinear, coincident)."""


class GenerationError(CranioforgeError):
    """Synthetic data generation produced invalid output."""
