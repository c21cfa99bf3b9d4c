"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: PreconditionError -> 1,
PrecisionExhausted / BudgetExceeded / StabilizationError -> 2,
MalformedFile -> 3.
"""


class FCrystalError(Exception):
    pass


class PreconditionError(FCrystalError):
    """A mathematical precondition of an operation is violated."""


class PrecisionExhausted(FCrystalError):
    """A result would carry less precision than the configured floor."""


class BudgetExceeded(FCrystalError):
    """An enumeration, iteration, or tower-extension budget ran out."""


class StabilizationError(FCrystalError):
    """An iteration that must stabilize failed to do so within its cap."""


class MalformedFile(FCrystalError):
    """A serialized object failed to parse; carries a location string."""

    def __init__(self, message, location=""):
        super().__init__(message)
        self.location = location
