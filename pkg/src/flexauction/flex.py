"""Nested flexibility sets: adequacy, minimal removals and good assignment.

Goods are indexed so that the first ``|B_l|`` goods form the flexibility set
of level ``l``.  A structure is stored as the incremental sizes
``m = (|B_1|, |B_2 \\ B_1|, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import accumulate
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, DomainError


@dataclass(frozen=True)
class FlexibilityStructure:
    m: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        if not m or any(v < 0 for v in m) or sum(m) < 1:
            raise DomainError("supply profile needs k >= 1 nonnegative entries and at least one good")
        object.__setattr__(self, "m", m)

    @property
    def k(self) -> int:
        return len(self.m)

    @property
    def M(self) -> int:
        return sum(self.m)

    @property
    def set_sizes(self) -> tuple[int, ...]:
        """``|B_1|, ..., |B_k|``."""
        return tuple(accumulate(self.m))

    def set_size(self, level: int) -> int:
        if not 1 <= level <= self.k:
            raise DomainError(f"level {level} outside 1..{self.k}")
        return self.set_sizes[level - 1]

    def in_set(self, good: int, level: int) -> bool:
        return 0 <= good < self.set_size(level)


@dataclass(frozen=True)
class RemovalPlan:
    r: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.r)


def _supply(m) -> tuple[int, ...]:
    return m.m if isinstance(m, FlexibilityStructure) else tuple(int(v) for v in m)


def demand_profile(levels: Iterable[int], k: int) -> tuple[int, ...]:
    """Count consumers per level (levels are 1-based)."""
    n = [0] * k
    for level in levels:
        if not 1 <= level <= k:
            raise DomainError(f"level {level} outside 1..{k}")
        n[level - 1] += 1
    return tuple(n)


def is_adequate(n: Sequence[int], m) -> bool:
    """Prefix-sum dominance of demand ``n`` by supply ``m``."""
    m = _supply(m)
    if len(n) != len(m):
        raise DomainError(f"demand has {len(n)} levels, supply has {len(m)}")
    return all(a <= b for a, b in zip(accumulate(n), accumulate(m)))


def minimal_removals(n: Sequence[int], m) -> RemovalPlan:
    """Per-level removal counts restoring adequacy with the fewest removals.

    ``r_j = (sum_{l<=j} (n_l - m_l) - sum_{l<j} r_l)^+``
    """
    m = _supply(m)
    if len(n) != len(m):
        raise DomainError(f"demand has {len(n)} levels, supply has {len(m)}")
    r = []
    excess = 0
    removed = 0
    for n_l, m_l in zip(n, m):
        excess += n_l - m_l
        r_j = max(excess - removed, 0)
        r.append(r_j)
        removed += r_j
    return RemovalPlan(tuple(r))


def assign_goods(survivors: Sequence[tuple[int, int]], structure: FlexibilityStructure, n_consumers: int | None = None) -> np.ndarray:
    """Allocation matrix serving every survivor from its flexibility set.

    Survivors are ``(consumer, level)`` pairs.  They are ranked by level,
    then by consumer index, and the i-th in that order receives good i.
    """
    if n_consumers is None:
        n_consumers = max((c for c, _ in survivors), default=-1) + 1
    n = demand_profile((lvl for _, lvl in survivors), structure.k)
    if not is_adequate(n, structure):
        raise ContractViolation(f"demand {n} is not adequate for supply {structure.m}")
    A = np.zeros((n_consumers, structure.M), dtype=np.int8)
    for good, (consumer, _) in enumerate(sorted(survivors, key=lambda p: (p[1], p[0]))):
        A[consumer, good] = 1
    return A
