"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class FormatError(ValueError):
    """Checkpoint or CSV content that does not match the expected schema."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DivergedError(RuntimeError):
    """Raised when an optimizer meets a non-finite loss.

    ``trace`` holds the history up to the last finite loss.
    """

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class OverPrunedError(RuntimeError):
    pass


class DomainError(ArithmeticError):
    """Evaluation left the domain of a library function."""

    def __init__(self, subexpression, message):
        self.subexpression = subexpression
        super().__init__(f"{message} in {subexpression}")
