"""Exception types shared across the toolkit."""


class UnobservableError(ValueError):
    """A mode span cannot be recovered from observations.

    Raised when a restricted observation matrix is rank deficient or an
    observation Gramian is singular.  ``direction`` holds a unit vector in
    the kernel when one could be identified.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class ConvergenceError(RuntimeError):
    """An iterative solve exhausted its budget or lost its bracket."""


class DataIntegrityError(ValueError):
    """Declared analytic bounds are contradicted by sampled data."""
