"""Exception hierarchy.

Every error the CLI can surface belongs to a family with a
stable process exit code (see ``sunlease.cli``).
"""


class SunleaseError(Exception):
    exit_code = 1


class DomainError(SunleaseError, ValueError):
    """An argument lies outside the domain of a formula."""

    exit_code = 2


class RangeError(DomainError):
    pass


class NotFoundError(SunleaseError, KeyError):
    exit_code = 2

    def __str__(self):
        return str(self.args[0]) if self.args else ""


# data-format family (exit 3)
class DataFormatError(SunleaseError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(DataFormatError):
    pass


class OrderingError(DataFormatError):
    pass


class UnknownMessageType(DataFormatError):
    pass


# numerical family (exit 4)
class NumericalError(SunleaseError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")


class UndefinedScoreError(NumericalError):
    pass


# configuration family (exit 5)
class ConfigError(SunleaseError, ValueError):
    exit_code = 5

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class VocabularyError(DomainError):
    pass


class ShapeError(DomainError):
    pass


class LifecycleError(SunleaseError, RuntimeError):
    pass


class CapacityError(DomainError):
    pass


class IllegalTransition(DomainError):
    pass


class IntegrityError(SunleaseError):
    def __init__(self, message, slot=None):
        self.slot = slot
        super().__init__(message)
