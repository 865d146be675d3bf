from __future__ import annotations


class LmsimError(Exception):
    """Base class for simulator errors."""


class ParseError(LmsimError):
    def __init__(self, path, line: int | None, message: str) -> None:
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class ValidationError(LmsimError):
    def __init__(self, field: str, message: str) -> None:
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class InconsistentMarginals(LmsimError):
    pass


class NotConverged(LmsimError):
    def __init__(self, residual: float, iterations: int, table=None) -> None:
        self.residual = residual
        self.iterations = iterations
        self.table = table
        super().__init__(f"IPF did not converge after {iterations} iterations (residual {residual:.3g})")


class SchemaMismatch(LmsimError):
    pass


class UnknownPerson(LmsimError, KeyError):
    pass


class MissingStratum(LmsimError):
    pass


class UnknownAlternative(LmsimError, KeyError):
    pass


class UnknownAttribute(LmsimError, KeyError):
    pass


class MissingAgent(LmsimError, KeyError):
    pass


class InvalidTransition(LmsimError):
    pass


class MissingArtifact(LmsimError, FileNotFoundError):
    pass


class PhaseError(LmsimError):
    """Wraps a module failure with the phase and module it came from."""

    def __init__(self, phase: str, module: str, cause: BaseException) -> None:
        self.phase = phase
        self.module = module
        self.cause = cause
        super().__init__(f"[{phase}/{module}] {cause}")
