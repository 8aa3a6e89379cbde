"""Brute-force references for the allocation program, removal program and payment integral.

Only meant for desk-scale cross-checks; every enumeration carries a size guard.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import CapacityError, DomainError
from .flex import FlexibilityStructure, demand_profile, is_adequate
from .mechanism import TypeProfile, allocate

MAX_CONSUMERS = 12
MAX_CANDIDATES = 10**6
OBJECTIVE_TOL = 1e-12


@dataclass(frozen=True)
class OracleResult:
    objective: float
    argmax_sets: tuple[frozenset[int], ...]
    enumerated: int


def brute_force_allocation(w, b, structure: FlexibilityStructure, tol: float = OBJECTIVE_TOL) -> OracleResult:
    """Maximize the winners' virtual-valuation sum over all feasible winner sets.

    A winner set is feasible iff its demand profile is adequate for the
    supply, so subsets are enumerated instead of allocation matrices.
    """
    w = [float(v) for v in w]
    b = [int(v) for v in b]
    N = len(w)
    if len(b) != N:
        raise DomainError("w and b must have the same length")
    if N > MAX_CONSUMERS or 2**N > MAX_CANDIDATES:
        raise CapacityError(f"{N} consumers exceed the brute-force limit of {MAX_CONSUMERS}")
    values = []
    for mask in range(2**N):
        members = [l for l in range(N) if mask >> l & 1]
        if is_adequate(demand_profile((b[l] for l in members), structure.k), structure):
            values.append((sum(w[l] for l in members), frozenset(members)))
    best = max(v for v, _ in values)
    argmax = tuple(s for v, s in values if v >= best - tol)
    return OracleResult(best, argmax, 2**N)


def brute_force_matrix_allocation(w, b, structure: FlexibilityStructure) -> OracleResult:
    """Same program as :func:`brute_force_allocation`, enumerating allocation matrices.

    Each consumer receives nothing or one good inside its reported set and no
    good is used twice.  Kept as a secondary cross-check for N, M <= 4.
    """
    w = [float(v) for v in w]
    N, M = len(w), structure.M
    if N > 4 or M > 4:
        raise CapacityError("matrix enumeration is limited to N, M <= 4")
    choices = [[None, *range(structure.set_size(int(level)))] for level in b]
    best = -np.inf
    sets: dict[frozenset, float] = {}
    count = 0
    for pick in product(*choices):
        goods = [g for g in pick if g is not None]
        if len(goods) != len(set(goods)):
            continue
        count += 1
        members = frozenset(l for l, g in enumerate(pick) if g is not None)
        value = sum(w[l] for l in members)
        sets[members] = value
        best = max(best, value)
    argmax = tuple(s for s, v in sets.items() if v >= best - OBJECTIVE_TOL)
    return OracleResult(float(best), argmax, count)


def brute_force_removals(n, m) -> int:
    """Fewest consumers to drop from demand ``n`` so that it becomes adequate for ``m``."""
    m = m.m if isinstance(m, FlexibilityStructure) else tuple(m)
    if len(n) != len(m):
        raise DomainError("n and m must have the same length")
    size = int(np.prod([v + 1 for v in n]))
    if size > MAX_CANDIDATES:
        raise CapacityError(f"{size} candidate demand profiles exceed {MAX_CANDIDATES}")
    total = sum(n)
    return min(total - sum(kept) for kept in product(*(range(v + 1) for v in n)) if is_adequate(kept, m))


def payment_by_integral(models, structure, profile: TypeProfile, consumer: int, probes: int = 64, tol: float = 1e-12) -> float:
    """Winner's payment as ``theta * 1 - integral of the win indicator`` from ``theta_min``.

    The indicator is evaluated through the allocation rule alone.  It is
    probed on a grid to bracket its step (raising if it is not a single
    0-to-1 step), the step is refined by bisection, and the step function is
    then integrated exactly.
    """
    theta = profile.theta[consumer]
    lo = models[consumer].theta_min

    def won(s):
        return consumer in allocate(models, structure, profile.with_report(consumer, theta=s))[0]

    if not won(theta):
        return 0.0
    grid = np.linspace(lo, theta, probes)
    marks = [won(s) for s in grid]
    first = marks.index(True)
    if not all(marks[first:]):
        raise DomainError(f"win indicator of consumer {consumer} is not monotone in its valuation")
    if first == 0:
        step = lo
    else:
        a, b = grid[first - 1], grid[first]
        while b - a > tol:
            mid = 0.5 * (a + b)
            if won(mid):
                b = mid
            else:
                a = mid
        step = 0.5 * (a + b)
    integral = theta - step
    return theta - integral
