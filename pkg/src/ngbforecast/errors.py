"""Exception types shared across the package.

The CLI maps these onto exit codes (2 for data problems, 3 for numerical
failures); everything else bubbles up as a usage error.
"""


class DataError(ValueError):
    """Input data violates a structural requirement (ordering, schema, size)."""


class NumericalError(ArithmeticError):
    """A numerical procedure produced non-finite values or failed to factorize."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
