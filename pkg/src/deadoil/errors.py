"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 2; every other ``DeadOilError`` is a
domain failure and maps to exit code 1.
"""


class DeadOilError(Exception):
    """Base class for all package errors."""


class ConfigError(DeadOilError, ValueError):
    """Malformed or inadmissible configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EvaluationError(DeadOilError):
    """A coefficient law or field generator produced a non-finite value."""


class InsufficientDataError(DeadOilError, ValueError):
    pass


class LinearSolveError(DeadOilError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NewtonError(DeadOilError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class ParabolicityError(DeadOilError):
    pass


class DivergenceError(DeadOilError):
    pass


class StallError(DeadOilError):
    """Line search exhausted its backtracking budget.

    ``result`` holds the optimizer state reached so far.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class DegenerateCaseError(DeadOilError, ValueError):
    pass


class HypothesisError(DeadOilError):
    """The coefficient set failed hypothesis validation."""
