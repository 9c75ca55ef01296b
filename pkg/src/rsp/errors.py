"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class InvalidStateError(ValueError):
    """A matrix is not a valid density matrix within tolerance."""


class ResourceError(RuntimeError):
    """A requested computation exceeds a desk-scale resource guard."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance.

    ``achieved`` carries the error estimate that was actually reached.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
