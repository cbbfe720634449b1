"""Exception hierarchy shared across splicekit."""

from __future__ import annotations


class SplicekitError(Exception):
    """Base class for every expected, user-facing error."""


class ParseError(SplicekitError):
    def __init__(self, message: str, text: str = "", position: int = 0, expected: tuple[str, ...] = ()):
        self.message = message
        self.text = text
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at offset {position}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)

    def caret(self) -> str:
        """Two-line diagnostic with a caret under the offending offset."""
        return f"{self.text}\n{' ' * self.position}^"


class Conflict(SplicekitError):
    """Two constraints on the same node cannot both hold."""


class CycleDetected(SplicekitError):
    pass


class SpecValidationError(SplicekitError):
    """A ConcreteSpec violates a structural invariant."""


class RepoFormatError(SplicekitError):
    pass


class ValidationError(SplicekitError):
    pass


class UnknownPackage(SplicekitError):
    pass


class Unsatisfiable(SplicekitError):
    def __init__(self, message: str, core: list[str] | None = None):
        self.core = list(core or [])
        text = message
        if self.core:
            text += "\n" + "\n".join(f"  - {item}" for item in self.core)
        super().__init__(text)


class InstanceTooLarge(SplicekitError):
    pass


class HashMismatch(SplicekitError):
    pass


class CacheIOError(SplicekitError):
    pass


class NoTarget(SplicekitError):
    pass


class AmbiguousTarget(SplicekitError):
    pass


class WouldCycle(SplicekitError):
    pass


class MissingProvenance(SplicekitError):
    pass


class MissingDependency(SplicekitError):
    pass


class PrefixTooLong(SplicekitError):
    pass
