"""Domain errors.

Every error is a ``ValueError`` so callers that only know the service layer
can keep catching ``ValueError``.
"""

from typing import Optional


class SoisError(ValueError):
    """Base class for all soisim errors."""


class ParseError(SoisError):
    """A group-role specification document could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(self.__str__())

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        if self.column is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, column {self.column}: {self.message}"


class UnknownRole(SoisError):
    """The requested role is not declared in the group."""


class MissingBinding(SoisError):
    """A parametrized cardinality has no binding."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no binding for cardinality parameter '{name}'")


class NonPositiveBinding(SoisError):
    """A cardinality parameter was bound to a value below 1."""

    def __init__(self, name: str, value: int):
        self.name = name
        self.value = value
        super().__init__(f"cardinality parameter '{name}' bound to {value}, expected >= 1")


class UnknownTerm(SoisError):
    """No group-level criterion uses the term."""


class WrongCriterionType(SoisError):
    """The criterion cannot be adjusted (not float+minimum)."""


class SchedulingInPast(SoisError):
    """An event was scheduled before the current simulated time."""


class SenderDead(SoisError):
    """A crashed or departed node tried to send a message."""


class NoEligibleNodes(SoisError):
    """No member satisfies the role's restrictive criteria."""


class EmptyBidSet(SoisError):
    """An election closed without any bid."""


class TooFewMembers(SoisError):
    """Reviewer assignment needs at least two members."""


class ConfigSpecMismatch(SoisError):
    """The scenario config and the group-role specification do not fit together."""


class ConfigError(SoisError):
    """A scenario configuration value is invalid."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
