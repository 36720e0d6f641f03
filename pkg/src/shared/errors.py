from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .schemas import ValidationReport


class AcopfError(Exception):
    """Base class for every error raised by the toolkit."""


class ZeroImpedance(AcopfError):
    pass


class CaseSyntaxError(AcopfError):
    """Malformed case file. Carries a 1-based line/column position."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class CaseSemanticError(AcopfError):
    pass


class MissingReference(CaseSemanticError):
    pass


class UnsupportedFeature(AcopfError):
    pass


class MissingVariable(AcopfError):
    def __init__(self, name: str) -> None:
        super().__init__(f"point has no value for variable {name}")
        self.name = name


class MissingCurrentBound(AcopfError):
    pass


class InvalidGrid(AcopfError):
    def __init__(self, report: "ValidationReport") -> None:
        messages = "; ".join(v.message for v in report.violations)
        super().__init__(f"grid failed validation: {messages}")
        self.report = report


class UnsupportedConstraint(AcopfError):
    pass


class InvalidBoundKinds(AcopfError):
    pass


class BoundChainViolation(AcopfError):
    pass


class PointFormatError(AcopfError):
    pass
