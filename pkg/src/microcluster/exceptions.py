"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DegeneracyError(NumericalError):
    """Every particle carries zero weight."""

    def __init__(self, step, message=None):
        super().__init__(message or f"all particles have zero weight at step {step}")
        self.step = step
