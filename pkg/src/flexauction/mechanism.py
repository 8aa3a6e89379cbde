"""Threshold allocation and payments of the revenue-maximizing auction.

The scalar engine (:func:`allocate`, :func:`run_auction`) follows the
iterative removal procedure literally and records a full trace.  The batch
engine (:func:`run_auction_batch`) runs the same rule on many profiles at
once with numpy and is what the Monte Carlo verifiers use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dist
from .dist import ConsumerTypeModel
from .errors import DomainError, ModelError
from .flex import FlexibilityStructure, assign_goods, demand_profile, minimal_removals

TIE_BREAKS = ("index", "random")


@dataclass(frozen=True)
class TypeProfile:
    """Reported valuations and (1-based) flexibility levels, one per consumer."""

    theta: tuple[float, ...]
    levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        object.__setattr__(self, "levels", tuple(int(b) for b in self.levels))
        if len(self.theta) != len(self.levels):
            raise DomainError("theta and levels must have the same length")

    @property
    def N(self) -> int:
        return len(self.theta)

    def with_report(self, consumer: int, theta: float | None = None, level: int | None = None) -> "TypeProfile":
        th = list(self.theta)
        lv = list(self.levels)
        if theta is not None:
            th[consumer] = theta
        if level is not None:
            lv[consumer] = level
        return TypeProfile(tuple(th), tuple(lv))


@dataclass(frozen=True)
class IterationRecord:
    level: int
    candidates: tuple[int, ...]
    r_star: int
    w_thr: float
    removed: tuple[int, ...]


@dataclass(frozen=True)
class ThresholdTrace:
    """Virtual-valuation thresholds of one run and the valuation thresholds they induce.

    ``theta_thr[l]`` is consumer ``l``'s valuation threshold at its reported
    level.  Consumers in ``unreachable`` cannot win at any valuation; their
    threshold is the sentinel ``theta_max``.
    """

    w_thr: tuple[float, ...]
    n_plus: tuple[int, ...]
    r_star: tuple[int, ...]
    theta_thr: tuple[float, ...] = ()
    unreachable: frozenset[int] = frozenset()


@dataclass(frozen=True)
class AuctionOutcome:
    allocation: np.ndarray = field(compare=False)
    payments: tuple[float, ...]
    winners: tuple[int, ...]
    winner_thresholds: dict[int, float]
    thresholds: ThresholdTrace
    trace: tuple[IterationRecord, ...]
    virtual_valuations: tuple[float, ...]

    def good_of(self, consumer: int) -> int | None:
        row = self.allocation[consumer]
        return int(np.argmax(row)) if row.any() else None

    @property
    def revenue(self) -> float:
        return float(sum(self.payments))


def check_models(models: Sequence[ConsumerTypeModel], structure: FlexibilityStructure, grid_points: int = 256) -> None:
    """Raise :class:`ModelError` unless every model meets the mechanism's assumptions."""
    for idx, model in enumerate(models):
        if model.k != structure.k:
            raise ModelError(f"consumer {idx} has {model.k} levels, structure has {structure.k}")
        report = dist.validate_hazard(model, grid_points)
        if not report.weak_ok:
            raise ModelError(f"consumer {idx} fails the monotone hazard condition: {report.worst_violation}")
        bad = [lvl for lvl, ok in enumerate(dist.validate_negative_reserve(model), start=1) if not ok]
        if bad:
            raise ModelError(f"consumer {idx} has nonnegative virtual valuation at theta_min on levels {bad}")


def _check_profile(models, structure, profile: TypeProfile) -> None:
    if len(models) != profile.N:
        raise DomainError(f"profile has {profile.N} consumers but {len(models)} models were given")
    for l, (model, theta, level) in enumerate(zip(models, profile.theta, profile.levels)):
        if model.k != structure.k:
            raise DomainError(f"consumer {l} has {model.k} levels, structure has {structure.k}")
        if not 1 <= level <= structure.k:
            raise DomainError(f"consumer {l}: level {level} outside 1..{structure.k}")
        if not model.theta_min <= theta <= model.theta_max:
            raise DomainError(f"consumer {l}: valuation {theta} outside [{model.theta_min}, {model.theta_max}]")


def _target(w_thr: Sequence[float], level: int) -> float:
    return max(0.0, *w_thr[level - 1:])


def allocate(models, structure: FlexibilityStructure, profile: TypeProfile, tie_break: str = "index", rng=None):
    """Winners of the optimal allocation; returns ``(winners, ThresholdTrace, trace)``.

    Ties in virtual valuation remove the higher consumer index first
    (``tie_break="index"``) or in an order drawn from ``rng`` (``"random"``).
    """
    _check_profile(models, structure, profile)
    if tie_break not in TIE_BREAKS:
        raise DomainError(f"unknown tie-break {tie_break!r}")
    N, k = profile.N, structure.k
    w = [float(models[l].densities[profile.levels[l] - 1].virtual_valuation(profile.theta[l])) for l in range(N)]
    if tie_break == "random":
        keys = dist._as_rng(rng).random(N)
        order_key = lambda l: (w[l], keys[l])
    else:
        order_key = lambda l: (w[l], -l)

    positive = [l for l in range(N) if w[l] > 0]
    n_plus = demand_profile((profile.levels[l] for l in positive), k)
    r_star = minimal_removals(n_plus, structure).r

    survivors: list[int] = []
    w_thr = []
    trace = []
    for i in range(1, k + 1):
        pool = sorted(survivors + [l for l in positive if profile.levels[l] == i], key=order_key)
        r = r_star[i - 1]
        removed, survivors = pool[:r], pool[r:]
        # exactly r are dropped by rank; under ties this can differ from a strict w > w_thr cut
        w_thr.append(w[removed[-1]] if r else 0.0)
        trace.append(IterationRecord(i, tuple(sorted(pool)), r, w_thr[-1], tuple(sorted(removed))))

    theta_thr = []
    unreachable = set()
    for l in range(N):
        model, level = models[l], profile.levels[l]
        target = _target(w_thr, level)
        if target >= model.theta_max:
            unreachable.add(l)
            theta_thr.append(model.theta_max)
        else:
            theta_thr.append(dist.inverse_virtual_valuation(model, level, target))
    thresholds = ThresholdTrace(tuple(w_thr), n_plus, r_star, tuple(theta_thr), frozenset(unreachable))
    return tuple(sorted(survivors)), thresholds, tuple(trace)


def valuation_threshold(models, trace: ThresholdTrace, consumer: int, level: int) -> float:
    """Lowest valuation at which ``consumer`` reporting ``level`` still loses.

    Returns the sentinel ``theta_max`` when the threshold lies above every
    attainable virtual valuation.
    """
    model = models[consumer]
    target = _target(trace.w_thr, level)
    if target >= model.theta_max:
        return model.theta_max
    return dist.inverse_virtual_valuation(model, level, target)


def run_auction(models, structure: FlexibilityStructure, profile: TypeProfile, tie_break: str = "index", rng=None) -> AuctionOutcome:
    winners, thresholds, trace = allocate(models, structure, profile, tie_break, rng)
    A = assign_goods([(l, profile.levels[l]) for l in winners], structure, profile.N)
    payments = [0.0] * profile.N
    winner_thr = {}
    for l in winners:
        thr = thresholds.theta_thr[l]
        winner_thr[l] = thr
        # a winner's report exceeds its threshold; the clamp only absorbs rounding
        payments[l] = min(thr, profile.theta[l])
    w = tuple(float(models[l].densities[profile.levels[l] - 1].virtual_valuation(profile.theta[l])) for l in range(profile.N))
    return AuctionOutcome(A, tuple(payments), winners, winner_thr, thresholds, trace, w)


def wins(models, structure, profile: TypeProfile, consumer: int) -> bool:
    return consumer in allocate(models, structure, profile)[0]


def critical_bid(models, structure, profile: TypeProfile, consumer: int, tol: float = 1e-9) -> float:
    """Valuation where ``consumer``'s allocation flips from losing to winning.

    Found by bisection on the allocation rule with every other report held
    fixed.  Returns ``theta_max`` if the consumer loses on the whole support.
    """
    model = models[consumer]
    lo, hi = model.theta_min, model.theta_max
    if not wins(models, structure, profile.with_report(consumer, theta=hi), consumer):
        return hi
    if wins(models, structure, profile.with_report(consumer, theta=lo), consumer):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if wins(models, structure, profile.with_report(consumer, theta=mid), consumer):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BatchOutcome:
    """Outcomes of ``S`` independent auctions with ``N`` consumers each."""

    wins: np.ndarray
    payments: np.ndarray
    virtual: np.ndarray
    w_thr: np.ndarray

    def utilities(self, theta: np.ndarray) -> np.ndarray:
        return np.where(self.wins, theta, 0.0) - self.payments


def virtual_matrix(models, theta: np.ndarray, levels: np.ndarray) -> np.ndarray:
    W = np.empty(theta.shape)
    for l, model in enumerate(models):
        for c in range(1, model.k + 1):
            mask = levels[:, l] == c
            if mask.any():
                W[mask, l] = model.densities[c - 1].virtual_valuation(theta[mask, l])
    return W


def _check_batch(models, structure, theta, levels):
    if theta.ndim != 2 or theta.shape != levels.shape or theta.shape[1] != len(models):
        raise DomainError("theta and levels must both have shape (samples, consumers)")
    if levels.size and (levels.min() < 1 or levels.max() > structure.k):
        raise DomainError(f"levels outside 1..{structure.k}")
    for l, model in enumerate(models):
        col = theta[:, l]
        if np.any(col < model.theta_min) or np.any(col > model.theta_max):
            raise DomainError(f"consumer {l}: valuation outside its support")


def run_auction_batch(models, structure: FlexibilityStructure, theta, levels, tie_break: str = "index", rng=None) -> BatchOutcome:
    """Vectorized :func:`run_auction` over the rows of ``theta`` and ``levels``."""
    theta = np.asarray(theta, dtype=float)
    levels = np.asarray(levels, dtype=np.int64)
    _check_batch(models, structure, theta, levels)
    if tie_break not in TIE_BREAKS:
        raise DomainError(f"unknown tie-break {tie_break!r}")
    S, N = theta.shape
    k = structure.k
    W = virtual_matrix(models, theta, levels)
    positive = W > 0
    rows = np.arange(S)

    n_plus = np.stack([(positive & (levels == i)).sum(axis=1) for i in range(1, k + 1)], axis=1)
    r_star = np.zeros((S, k), dtype=np.int64)
    excess = np.zeros(S, dtype=np.int64)
    removed_so_far = np.zeros(S, dtype=np.int64)
    for j in range(k):
        excess += n_plus[:, j] - structure.m[j]
        r_star[:, j] = np.maximum(excess - removed_so_far, 0)
        removed_so_far += r_star[:, j]

    if tie_break == "random":
        secondary = dist._as_rng(rng).random((S, N))
    else:
        secondary = np.broadcast_to(-np.arange(N, dtype=float), (S, N))

    alive = np.zeros((S, N), dtype=bool)
    w_thr = np.zeros((S, k))
    for i in range(k):
        pool = alive | (positive & (levels == i + 1))
        key = np.where(pool, W, np.inf)
        order = np.lexsort((secondary, key), axis=-1)
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(N)[None, :].repeat(S, axis=0), axis=1)
        r = r_star[:, i]
        drop = pool & (rank < r[:, None])
        has = r > 0
        if N:
            last = order[rows, np.maximum(r - 1, 0)]
            w_thr[:, i] = np.where(has, W[rows, last], 0.0)
        alive = pool & ~drop

    # suffix max over levels, floored at zero
    suffix = np.maximum(np.maximum.accumulate(w_thr[:, ::-1], axis=1)[:, ::-1], 0.0)
    payments = np.zeros((S, N))
    for l, model in enumerate(models):
        for c in range(1, k + 1):
            mask = alive[:, l] & (levels[:, l] == c)
            if mask.any():
                thr = model.densities[c - 1].inverse_virtual_valuation(suffix[mask, c - 1])
                payments[mask, l] = np.minimum(thr, theta[mask, l])
    return BatchOutcome(alive, payments, W, w_thr)


class OptimalAuction:
    """The threshold auction bound to fixed models and supply.

    Exposes the scalar engine as :meth:`outcome` and the vectorized engine
    as :meth:`batch`; the verifiers accept any object with a compatible
    ``batch`` method.
    """

    name = "optimal"

    def __init__(self, models, structure: FlexibilityStructure, tie_break: str = "index", validate: bool = True):
        self.models = tuple(models)
        self.structure = structure
        self.tie_break = tie_break
        if validate:
            check_models(self.models, structure)

    def outcome(self, profile: TypeProfile, rng=None) -> AuctionOutcome:
        return run_auction(self.models, self.structure, profile, self.tie_break, rng)

    def batch(self, theta, levels, rng=None) -> BatchOutcome:
        return run_auction_batch(self.models, self.structure, theta, levels, self.tie_break, rng)

