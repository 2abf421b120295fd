class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class UnlearnableError(RuntimeError):
    """Raised when a learner restricted to observed prices has nothing to choose from."""
