"""Exception types raised across the package."""


class OutOfDomainError(ValueError):
    """A query point lies outside the closed mesh rectangle."""


class LinearSolveError(RuntimeError):
    """A sparse linear solve failed or missed its residual contract."""

    def __init__(self, message, residual=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration
