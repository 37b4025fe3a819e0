"""Exception hierarchy shared by all freqlab modules."""

from __future__ import annotations


class FreqlabError(Exception):
    pass


class InvalidArgument(FreqlabError, ValueError):
    pass


class DomainError(FreqlabError, ValueError):
    """Parameters outside the domain where a closed form exists."""


class DegenerateParameters(DomainError):
    pass


class NumericalFailure(FreqlabError, ArithmeticError):
    pass


class SimulationDiverged(FreqlabError, RuntimeError):
    pass


class InvariantViolation(FreqlabError, RuntimeError):
    pass


class EmptyInput(FreqlabError, ValueError):
    pass


class RegimeMismatch(FreqlabError, ValueError):
    pass


class ScenarioError(FreqlabError, ValueError):
    """Scenario file could not be parsed or validated.

    ``line`` is the 1-based line in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class UnitMismatch(ScenarioError):
    pass
