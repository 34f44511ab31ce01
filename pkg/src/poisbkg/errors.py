"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """A dataset, parameter or configuration violates a structural invariant."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (at index {index})"
        super().__init__(message)


class InfiniteDevianceError(ValueError):
    """A model assigns zero mean to a bin with observed counts."""

    def __init__(self, message: str = "infinite deviance", index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (bin {index})"
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """An optimizer ran out of evaluations before meeting its tolerance.

    ``best`` holds the best point found, so callers can still inspect it.
    """

    def __init__(self, message: str, best: object = None):
        self.best = best
        super().__init__(message)


class ReplicateError(RuntimeError):
    """A fit failed inside a Monte Carlo loop; ``replicate`` is its index."""

    def __init__(self, replicate: int, cause: BaseException):
        self.replicate = replicate
        self.cause = cause
        super().__init__(f"replicate {replicate}: {type(cause).__name__}: {cause}")
