"""Exception types shared across the package."""


class InvalidGeometryError(ValueError):
    """Non-finite coordinates, mismatched dimensions or a malformed shape."""


class EmptyInputError(ValueError):
    """An operation that needs at least one point got none."""


class AdaptivityViolation(RuntimeError):
    """An answer was read while its non-adaptive batch was still open."""


class BudgetTooSmall(ValueError):
    pass


class BudgetViolation(RuntimeError):
    """An estimator used more queries than it was allowed."""


class ConstructionFailed(RuntimeError):
    """A lower-bound construction could not find its witness point."""


class AdversaryFailed(RuntimeError):
    """The two instances of an adversary pair produced different transcripts."""


class InsufficientData(ValueError):
    pass


class PointSetFormatError(ValueError):
    """A point-set file does not follow the ``d n`` + rows format."""


class UsageError(ValueError):
    """Invalid combination of options (wrong dimension, wrong adversary for an estimator)."""
