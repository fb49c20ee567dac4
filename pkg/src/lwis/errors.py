"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


class UnsatisfiableConstraintError(ValueError):
    """No constraint of the requested kind can be formed from the labels."""


class ResourceLimitError(RuntimeError):
    """The request would exceed a hard size limit."""


class NumericalFailure(ArithmeticError):
    """The metric matrix became non-finite during training."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite metric matrix at iteration {iteration}")


class ParseError(ValueError):
    """Malformed input file."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")
