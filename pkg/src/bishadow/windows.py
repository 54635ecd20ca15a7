"""Integer index windows [lo, hi] shared by orbits, splittings and solves."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Window:
    """Closed integer interval of sequence indices.

    Points live on every index ``lo..hi``; transitions (map applications,
    defects) live on ``lo..hi-1``.
    """

    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @classmethod
    def symmetric(cls, k: int) -> "Window":
        if k < 0:
            raise ValueError("half-width k must be nonnegative")
        return cls(-k, k)

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def indices(self) -> range:
        return range(self.lo, self.hi + 1)

    def transitions(self) -> range:
        return range(self.lo, self.hi)

    def pos(self, i: int) -> int:
        """Array position of index ``i``."""
        if not self.lo <= i <= self.hi:
            raise IndexError(f"index {i} outside window [{self.lo}, {self.hi}]")
        return i - self.lo

    def contains(self, other: "Window") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi
