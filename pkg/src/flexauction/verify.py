"""Monte Carlo verification of incentive compatibility, rationality, monotonicity and revenue.

Interim quantities are averages over the other consumers' truthful types.
All reports of one consumer are evaluated against the *same* opponent draws
(common random numbers), so comparisons between reports use the standard
error of the paired per-sample difference.  Statistical checks fail when a
z-score drops below -3.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dist import model_to_dict, sample_types
from .errors import DomainError
from .flex import FlexibilityStructure, minimal_removals
from .mechanism import OptimalAuction, TypeProfile, critical_bid, run_auction
from .oracle import brute_force_allocation, brute_force_removals, payment_by_integral

Z_LIMIT = 3.0
EXACT_TOL = 1e-12
MIN_SAMPLES = 1000

# stream tags, combined with the user seed
_OPPONENTS, _TIES, _PROFILES = 1, 2, 3


def rng_stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def config_digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class InterimEstimate:
    q_bar: float
    t_bar: float
    q_stderr: float
    t_stderr: float
    samples: int


@dataclass(frozen=True)
class VerificationReport:
    check: str
    passed: bool
    worst_margin: float
    z_score: float | None
    config_digest: str
    details: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "worst_margin": _jsonable(self.worst_margin),
            "z_score": _jsonable(self.z_score),
            "config_digest": self.config_digest,
            "details": _jsonable(self.details),
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _stderr(x: np.ndarray, axis=-1) -> np.ndarray:
    n = x.shape[axis]
    return np.std(x, axis=axis, ddof=1) / np.sqrt(n)


def _zscore(mean, se):
    """z of a paired mean; a zero-variance difference counts as exact."""
    mean = np.asarray(mean, dtype=float)
    se = np.asarray(se, dtype=float)
    noisy = se > EXACT_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        z = mean / np.where(noisy, se, 1.0)
    exact = np.where(mean >= -EXACT_TOL, np.inf, -np.inf)
    return np.where(noisy, z, exact)


def _mechanism(models, structure, mechanism):
    return mechanism if mechanism is not None else OptimalAuction(models, structure)


def _digest(mechanism, check: str, **params) -> str:
    return config_digest(
        {
            "check": check,
            "mechanism": getattr(mechanism, "name", type(mechanism).__name__),
            "m": list(mechanism.structure.m),
            "models": [model_to_dict(m) for m in mechanism.models],
            **params,
        }
    )


def draw_profiles(models, samples: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Truthful type profiles, shape ``(samples, N)``."""
    N = len(models)
    theta = np.empty((samples, N))
    levels = np.empty((samples, N), dtype=np.int64)
    for l, model in enumerate(models):
        theta[:, l], levels[:, l] = sample_types(model, rng, samples)
    return theta, levels


@dataclass(frozen=True)
class InterimTable:
    """Per-sample outcomes of one consumer over a list of reports, sharing opponent draws."""

    consumer: int
    reports: tuple[tuple[float, int], ...]
    wins: np.ndarray
    payments: np.ndarray

    @property
    def samples(self) -> int:
        return self.wins.shape[1]

    def index(self, report) -> int:
        return self.reports.index((float(report[0]), int(report[1])))

    def estimate(self, report) -> InterimEstimate:
        i = self.index(report)
        q = self.wins[i].astype(float)
        t = self.payments[i]
        return InterimEstimate(float(q.mean()), float(t.mean()), float(_stderr(q)), float(_stderr(t)), self.samples)

    def q_bar(self) -> np.ndarray:
        return self.wins.mean(axis=1)

    def t_bar(self) -> np.ndarray:
        return self.payments.mean(axis=1)


def interim_table(models, structure, consumer: int, reports: Sequence[tuple[float, int]], samples: int, seed: int, mechanism=None) -> InterimTable:
    mech = _mechanism(models, structure, mechanism)
    if samples < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples")
    model = mech.models[consumer]
    reports = tuple((float(r), int(c)) for r, c in reports)
    for r, c in reports:
        if not model.theta_min <= r <= model.theta_max or not 1 <= c <= mech.structure.k:
            raise DomainError(f"report {(r, c)} outside the type space of consumer {consumer}")
    theta, levels = draw_profiles(mech.models, samples, rng_stream(seed, _OPPONENTS, consumer))
    wins = np.empty((len(reports), samples), dtype=bool)
    pays = np.empty((len(reports), samples))
    for i, (r, c) in enumerate(reports):
        theta[:, consumer] = r
        levels[:, consumer] = c
        out = mech.batch(theta, levels, rng=rng_stream(seed, _TIES, consumer))
        wins[i] = out.wins[:, consumer]
        pays[i] = out.payments[:, consumer]
    return InterimTable(consumer, reports, wins, pays)


def estimate_interim(models, structure, consumer: int, report: tuple[float, int], samples: int, seed: int, mechanism=None) -> InterimEstimate:
    """Win probability and expected payment of ``consumer`` reporting ``report`` against truthful opponents."""
    return interim_table(models, structure, consumer, [report], samples, seed, mechanism).estimate(report)


def decile_grid(model) -> tuple[float, ...]:
    lo, hi = model.support
    return tuple(float(lo + (hi - lo) * q) for q in np.arange(1, 10) / 10)


def _grid_reports(grid, k):
    return [(float(r), c) for r in grid for c in range(1, k + 1)]


def check_bic(models, structure, consumer: int, grid=None, samples: int = 100_000, seed: int = 0, mechanism=None, table: InterimTable | None = None) -> VerificationReport:
    """No misreport ``(r, c)`` with ``c <= b`` beats truth-telling for any true type on the grid."""
    mech = _mechanism(models, structure, mechanism)
    k = mech.structure.k
    grid = tuple(grid) if grid is not None else decile_grid(mech.models[consumer])
    if table is None:
        table = interim_table(mech.models, mech.structure, consumer, _grid_reports(grid, k), samples, seed, mech)
    worst = (np.inf, np.inf, None)
    failures = 0
    pairs = 0
    for theta in grid:
        for b in range(1, k + 1):
            t_idx = table.index((theta, b))
            u_true = np.where(table.wins[t_idx], theta, 0.0) - table.payments[t_idx]
            for r in grid:
                for c in range(1, b + 1):
                    m_idx = table.index((r, c))
                    if m_idx == t_idx:
                        continue
                    u_mis = np.where(table.wins[m_idx], theta, 0.0) - table.payments[m_idx]
                    gain = u_true - u_mis
                    mean = float(gain.mean())
                    z = float(_zscore(mean, _stderr(gain)))
                    pairs += 1
                    failures += z < -Z_LIMIT
                    if (z, mean) < worst[:2]:
                        worst = (z, mean, {"true": [theta, b], "report": [r, c]})
    z, margin, where = worst
    return VerificationReport(
        f"bic[consumer={consumer}]",
        failures == 0,
        margin,
        z,
        _digest(mech, "bic", consumer=consumer, grid=list(grid), samples=table.samples, seed=seed),
        {"pairs": pairs, "failures": int(failures), "worst_pair": where, "samples": table.samples},
    )


def check_monotonicity(models, structure, consumer: int, grid=None, samples: int = 100_000, seed: int = 0, mechanism=None, table: InterimTable | None = None) -> VerificationReport:
    """Win probability is nondecreasing in the reported valuation and in the reported level."""
    mech = _mechanism(models, structure, mechanism)
    k = mech.structure.k
    grid = tuple(grid) if grid is not None else decile_grid(mech.models[consumer])
    if table is None:
        table = interim_table(mech.models, mech.structure, consumer, _grid_reports(grid, k), samples, seed, mech)
    comparisons = []
    for c in range(1, k + 1):
        for r0, r1 in zip(grid[:-1], grid[1:]):
            comparisons.append(((r0, c), (r1, c)))
    for r in grid:
        for c in range(1, k):
            comparisons.append(((r, c), (r, c + 1)))
    worst = (np.inf, np.inf, None)
    failures = 0
    for low, high in comparisons:
        diff = table.wins[table.index(high)].astype(float) - table.wins[table.index(low)]
        mean = float(diff.mean())
        z = float(_zscore(mean, _stderr(diff)))
        failures += z < -Z_LIMIT
        if (z, mean) < worst[:2]:
            worst = (z, mean, {"lower": list(low), "higher": list(high)})
    z, margin, where = worst
    return VerificationReport(
        f"monotonicity[consumer={consumer}]",
        failures == 0,
        margin,
        z,
        _digest(mech, "monotonicity", consumer=consumer, grid=list(grid), samples=table.samples, seed=seed),
        {"comparisons": len(comparisons), "failures": int(failures), "worst_pair": where},
    )


def check_interim_boundary(models, structure, consumer: int, samples: int = 100_000, seed: int = 0, mechanism=None, table: InterimTable | None = None) -> VerificationReport:
    """Expected payment at the lowest valuation is zero for every reported level."""
    mech = _mechanism(models, structure, mechanism)
    lo = mech.models[consumer].theta_min
    reports = [(lo, c) for c in range(1, mech.structure.k + 1)]
    if table is None or any(r not in table.reports for r in reports):
        table = interim_table(mech.models, mech.structure, consumer, reports, samples, seed, mech)
    worst_z, worst_t = np.inf, 0.0
    for report in reports:
        est = table.estimate(report)
        z = float(_zscore(-abs(est.t_bar), est.t_stderr))
        if z < worst_z:
            worst_z, worst_t = z, est.t_bar
    return VerificationReport(
        f"interim-boundary[consumer={consumer}]",
        worst_z >= -Z_LIMIT,
        -abs(worst_t),
        worst_z,
        _digest(mech, "interim-boundary", consumer=consumer, samples=table.samples, seed=seed),
        {"t_bar": worst_t},
    )


def check_payment_identity(models, structure, consumer: int, points: int = 41, samples: int = 100_000, seed: int = 0, mechanism=None, table: InterimTable | None = None) -> VerificationReport:
    """Interim payments follow ``T(r) = r Q(r) - integral_{theta_min}^r Q(s) ds``.

    The integral is a trapezoid rule over an even grid; for a monotone win
    indicator its error is at most ``h (Q(r) - Q(theta_min)) / 2``, which is
    added to the 3-standard-error allowance.
    """
    mech = _mechanism(models, structure, mechanism)
    model = mech.models[consumer]
    grid = np.linspace(model.theta_min, model.theta_max, points)
    k = mech.structure.k
    reports = _grid_reports(grid, k)
    if table is None or any(r not in table.reports for r in reports):
        table = interim_table(mech.models, mech.structure, consumer, reports, samples, seed, mech)
    h = grid[1] - grid[0]
    worst = (np.inf, None)
    failures = 0
    for c in range(1, k + 1):
        idx = [table.index((r, c)) for r in grid]
        win = table.wins[idx].astype(float)
        pay = table.payments[idx]
        area = np.concatenate([np.zeros((1, win.shape[1])), np.cumsum(h * (win[1:] + win[:-1]) / 2, axis=0)])
        resid = pay - grid[:, None] * win + area
        mean = resid.mean(axis=1)
        se = _stderr(resid)
        q = win.mean(axis=1)
        allowance = Z_LIMIT * se + h * (q - q[0]) / 2 + EXACT_TOL
        slack = allowance - np.abs(mean)
        failures += int(np.sum(slack < 0))
        j = int(np.argmin(slack))
        if slack[j] < worst[0]:
            worst = (float(slack[j]), {"report": [float(grid[j]), c], "residual": float(mean[j]), "allowance": float(allowance[j])})
    return VerificationReport(
        f"payment-identity[consumer={consumer}]",
        failures == 0,
        worst[0],
        None,
        _digest(mech, "payment-identity", consumer=consumer, points=points, samples=table.samples, seed=seed),
        {"failures": failures, "worst": worst[1]},
    )


def check_ir_expost(models, structure, trials: int, seed: int = 0, mechanism=None) -> VerificationReport:
    """Every consumer's realized utility under truthful play is nonnegative and losers pay nothing."""
    mech = _mechanism(models, structure, mechanism)
    if trials < 1:
        raise DomainError("trials must be positive")
    theta, levels = draw_profiles(mech.models, trials, rng_stream(seed, _PROFILES))
    out = mech.batch(theta, levels, rng=rng_stream(seed, _TIES))
    util = out.utilities(theta)
    negative = int(np.sum(util < 0))
    loser_pays = int(np.sum(out.payments[~out.wins] != 0))
    margin = float(util.min()) if util.size else 0.0
    return VerificationReport(
        "ir-expost",
        negative == 0 and loser_pays == 0,
        margin,
        None,
        _digest(mech, "ir-expost", trials=trials, seed=seed),
        {"trials": trials, "negative_utilities": negative, "losers_paying": loser_pays},
    )


@dataclass(frozen=True)
class RevenueEstimate:
    mean: float
    stderr: float
    virtual_surplus: float
    virtual_stderr: float
    difference_stderr: float
    trials: int

    def __iter__(self):
        # unpacks as (mean, stderr)
        return iter((self.mean, self.stderr))


def revenue_samples(models, structure, trials: int, seed: int = 0, mechanism=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial revenue and winners' virtual-valuation sum under truthful play."""
    mech = _mechanism(models, structure, mechanism)
    theta, levels = draw_profiles(mech.models, trials, rng_stream(seed, _PROFILES))
    out = mech.batch(theta, levels, rng=rng_stream(seed, _TIES))
    revenue = out.payments.sum(axis=1)
    surplus = np.where(out.wins, out.virtual, 0.0).sum(axis=1)
    return revenue, surplus


def estimate_revenue(models, structure, trials: int, seed: int = 0, mechanism=None) -> RevenueEstimate:
    if trials < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} trials")
    revenue, surplus = revenue_samples(models, structure, trials, seed, mechanism)
    return RevenueEstimate(
        float(revenue.mean()),
        float(_stderr(revenue)),
        float(surplus.mean()),
        float(_stderr(surplus)),
        float(_stderr(revenue - surplus)),
        trials,
    )


def check_revenue_identity(models, structure, trials: int, seed: int = 0, mechanism=None) -> VerificationReport:
    """Expected revenue equals expected virtual surplus of the winners."""
    mech = _mechanism(models, structure, mechanism)
    est = estimate_revenue(mech.models, mech.structure, trials, seed, mech)
    gap = est.mean - est.virtual_surplus
    z = float(_zscore(-abs(gap), est.difference_stderr))
    return VerificationReport(
        "revenue-identity",
        z >= -Z_LIMIT,
        -abs(gap),
        z,
        _digest(mech, "revenue-identity", trials=trials, seed=seed),
        {"revenue": est.mean, "revenue_stderr": est.stderr, "virtual_surplus": est.virtual_surplus, "virtual_stderr": est.virtual_stderr},
    )


def check_oracle_equivalence(instances, tol: float = EXACT_TOL) -> VerificationReport:
    """Threshold allocation attains the brute-force optimum of the virtual-surplus program.

    ``instances`` yields ``(models, structure, profile)`` triples.
    """
    worst = 0.0
    failures = 0
    count = 0
    for models, structure, profile in instances:
        out = run_auction(models, structure, profile)
        w = out.virtual_valuations
        achieved = sum(w[l] for l in out.winners)
        best = brute_force_allocation(w, profile.levels, structure).objective
        gap = abs(achieved - best)
        worst = max(worst, gap)
        failures += gap > tol
        count += 1
    return VerificationReport(
        "oracle-allocation",
        failures == 0,
        -worst,
        None,
        config_digest({"check": "oracle-allocation", "instances": count}),
        {"instances": count, "failures": int(failures)},
    )


def check_removal_grid(max_k: int = 3, max_entry: int = 4) -> VerificationReport:
    """Closed-form removal totals equal the exhaustive minimum on every small (n, m)."""
    from itertools import product

    failures = 0
    pairs = 0
    for k in range(1, max_k + 1):
        for n in product(range(max_entry + 1), repeat=k):
            for m in product(range(max_entry + 1), repeat=k):
                pairs += 1
                failures += minimal_removals(n, m).total != brute_force_removals(n, m)
    return VerificationReport(
        "oracle-removals",
        failures == 0,
        -float(failures),
        None,
        config_digest({"check": "oracle-removals", "max_k": max_k, "max_entry": max_entry}),
        {"pairs": pairs, "failures": int(failures)},
    )


def check_payments(instances, tol: float = 1e-8) -> VerificationReport:
    """Winners pay their critical bid and the payment integral; losers pay zero."""
    worst = 0.0
    failures = 0
    winners = 0
    for models, structure, profile in instances:
        out = run_auction(models, structure, profile)
        for l in range(profile.N):
            pay = out.payments[l]
            if l not in out.winners:
                failures += pay != 0.0
                continue
            winners += 1
            gap = max(
                abs(pay - critical_bid(models, structure, profile, l)),
                abs(pay - payment_by_integral(models, structure, profile, l)),
            )
            worst = max(worst, gap)
            failures += gap > tol
    return VerificationReport(
        "payments-critical-bid",
        failures == 0,
        -worst,
        None,
        config_digest({"check": "payments-critical-bid", "winners": winners}),
        {"winners": winners, "failures": int(failures)},
    )


def sampled_instances(models, structure, count: int, seed: int):
    """Truthful profiles of a fixed economy, as ``(models, structure, profile)`` triples."""
    theta, levels = draw_profiles(models, count, rng_stream(seed, _PROFILES, 7))
    for row in range(count):
        yield models, structure, TypeProfile(tuple(theta[row]), tuple(levels[row]))


def consumer_checks(mechanism, consumer: int, samples: int, seed: int, grid=None, points: int = 41) -> tuple[list[VerificationReport], InterimTable]:
    """BIC, monotonicity, boundary and payment-identity checks for one consumer.

    Returns the reports and the fine interim table (useful for plotting).
    """
    model = mechanism.models[consumer]
    k = mechanism.structure.k
    grid = tuple(grid) if grid is not None else decile_grid(model)
    coarse = interim_table(mechanism.models, mechanism.structure, consumer, _grid_reports(grid, k), samples, seed, mechanism)
    fine_grid = np.linspace(model.theta_min, model.theta_max, points)
    fine = interim_table(mechanism.models, mechanism.structure, consumer, _grid_reports(fine_grid, k), samples, seed, mechanism)
    reports = [
        check_bic(None, None, consumer, grid, samples, seed, mechanism, coarse),
        check_monotonicity(None, None, consumer, grid, samples, seed, mechanism, coarse),
        check_interim_boundary(None, None, consumer, samples, seed, mechanism, fine),
        check_payment_identity(None, None, consumer, points, samples, seed, mechanism, fine),
    ]
    return reports, fine
