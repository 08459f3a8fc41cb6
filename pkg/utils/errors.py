"""Exception hierarchy shared by every package."""

from __future__ import annotations


class LhmError(RuntimeError):
    """Base class for every failure raised by this project."""


class ShapeError(LhmError):
    """Array extents do not agree."""


class DomainError(LhmError):
    """An input lies outside an operation's domain."""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message if index is None else f"{message} (flat index {index})")
        self.index = index


class NonFiniteError(LhmError):
    """NaN or Inf produced or received."""


class TapeError(LhmError):
    """Misuse of a gradient tape."""


class FormatError(LhmError):
    """A binary or text file could not be parsed."""


class VersionError(FormatError):
    """Magic bytes or version field do not match."""


class InvariantError(LhmError):
    """A domain invariant does not hold."""

    def __init__(self, field: str, message: str, index: int | None = None) -> None:
        where = field if index is None else f"{field}[{index}]"
        super().__init__(f"{where}: {message}")
        self.field = field
        self.index = index


class DegenerateError(LhmError):
    """Geometry is degenerate (zero area, singular blend, ...)."""


class ConfigError(LhmError):
    """Invalid configuration or command-line usage."""


class GradCheckError(LhmError):
    """A finite-difference check could not be evaluated or failed."""
