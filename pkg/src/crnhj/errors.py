"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CrnhjError(Exception):
    """Base class for library errors."""


class EmptyGrid(CrnhjError):
    pass


class NoIntersection(CrnhjError):
    pass


class StepTooLarge(CrnhjError):
    pass


class StepTooSmall(CrnhjError):
    pass


class NoConvergence(CrnhjError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ExponentOverflow(CrnhjError):
    pass


class CFLViolation(CrnhjError):
    pass


class SizeMismatch(CrnhjError):
    pass


class DegenerateRate(CrnhjError):
    pass


class ParseError(CrnhjError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class ValidationError(CrnhjError):
    """Collects every problem found in a configuration at once."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)
