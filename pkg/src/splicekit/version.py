"""Dotted-decimal versions and interval constraints over them.

A constraint is an interval ``lo:hi`` where the upper bound is
prefix-inclusive: ``:1.5`` admits ``1.5.7``.  A plain ``@1.2`` is the
degenerate interval ``1.2:1.2`` and therefore admits ``1.2`` and every
version that starts with ``1.2``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering

from .errors import Conflict

_VERSION_RE = re.compile(r"^[0-9]+(\.[0-9]+)*$")

# Larger than any version component; closes a prefix-inclusive upper bound.
_TOP = float("inf")


@total_ordering
@dataclass(frozen=True)
class Version:
    components: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("a version needs at least one component")
        if any(c < 0 for c in self.components):
            raise ValueError(f"negative version component in {self.components}")

    @classmethod
    def parse(cls, text: str) -> Version:
        if not _VERSION_RE.match(text):
            raise ValueError(f"malformed version: {text!r}")
        return cls(tuple(int(part) for part in text.split(".")))

    def __lt__(self, other: Version) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.components < other.components

    def startswith(self, prefix: Version) -> bool:
        n = len(prefix.components)
        return self.components[:n] == prefix.components

    def __str__(self) -> str:
        return ".".join(str(c) for c in self.components)

    def __repr__(self) -> str:
        return f"Version('{self}')"


def _upper_key(v: Version) -> tuple[float, ...]:
    return v.components + (_TOP,)


@dataclass(frozen=True)
class VersionConstraint:
    lo: Version | None = None
    hi: Version | None = None

    def __post_init__(self) -> None:
        if self.lo is None and self.hi is None:
            raise ValueError("a version constraint needs at least one bound")
        if self.lo is not None and self.hi is not None and not self._nonempty(self.lo, self.hi):
            raise ValueError(f"empty version range {self.lo}:{self.hi}")

    @staticmethod
    def _nonempty(lo: Version, hi: Version) -> bool:
        return lo.components < _upper_key(hi)

    @classmethod
    def exact(cls, v: Version | str) -> VersionConstraint:
        if isinstance(v, str):
            v = Version.parse(v)
        return cls(v, v)

    @classmethod
    def parse(cls, text: str) -> VersionConstraint:
        if ":" not in text:
            return cls.exact(Version.parse(text))
        lo_text, sep, hi_text = text.partition(":")
        if ":" in hi_text or (not lo_text and not hi_text):
            raise ValueError(f"malformed version range: {text!r}")
        lo = Version.parse(lo_text) if lo_text else None
        hi = Version.parse(hi_text) if hi_text else None
        return cls(lo, hi)

    @property
    def kind(self) -> str:
        return "exact-or-prefix" if self.lo is not None and self.lo == self.hi else "range"

    def contains(self, v: Version) -> bool:
        if self.lo is not None and v < self.lo:
            return False
        if self.hi is not None and not v.components < _upper_key(self.hi):
            return False
        return True

    __contains__ = contains

    def intersect(self, other: VersionConstraint) -> VersionConstraint:
        los = [b for b in (self.lo, other.lo) if b is not None]
        his = [b for b in (self.hi, other.hi) if b is not None]
        lo = max(los) if los else None
        hi = min(his, key=_upper_key) if his else None
        if lo is not None and hi is not None and not self._nonempty(lo, hi):
            raise Conflict(f"version ranges @{self} and @{other} do not intersect")
        return VersionConstraint(lo, hi)

    def __str__(self) -> str:
        if self.kind == "exact-or-prefix":
            return str(self.lo)
        return f"{self.lo or ''}:{self.hi or ''}"
