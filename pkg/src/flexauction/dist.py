"""Consumer type distributions and virtual valuations.

Each consumer draws a flexibility level ``b`` in ``1..k`` from ``level_mass``
and then a valuation from a piecewise-linear conditional density on a shared
support ``[theta_min, theta_max]``.  Everything the mechanism needs from a
distribution (CDF, virtual valuation, its inverse, reserve prices) is
available in closed form for this family.

Levels are 1-based throughout the package; consumers and goods are 0-based
indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, ModelError, RangeError

MASS_TOL = 1e-12
NORM_TOL = 1e-10
HAZARD_TOL = 1e-9

__all__ = [
    "PiecewiseLinearDensity",
    "ConsumerTypeModel",
    "HazardReport",
    "uniform_density",
    "linear_density",
    "uniform_model",
    "cdf",
    "pdf",
    "virtual_valuation",
    "inverse_virtual_valuation",
    "reserve_price",
    "validate_hazard",
    "validate_negative_reserve",
    "sample_type",
    "sample_types",
    "model_from_dict",
    "model_to_dict",
]


@dataclass(frozen=True)
class PiecewiseLinearDensity:
    """Density that is linear between consecutive knots.

    All evaluation methods accept scalars or arrays and are exact up to
    floating point: the CDF is piecewise quadratic, and both the inverse CDF
    and the inverse virtual valuation reduce to one quadratic per segment.
    Arguments are clipped to the support; range checks belong to callers.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]
    _x: np.ndarray = field(init=False, repr=False, compare=False)
    _y: np.ndarray = field(init=False, repr=False, compare=False)
    _h: np.ndarray = field(init=False, repr=False, compare=False)
    _s: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _tail: np.ndarray = field(init=False, repr=False, compare=False)
    _knot_vv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.knots, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != y.shape:
            raise ModelError("density needs at least two knots and one value per knot")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ModelError("density knots and values must be finite")
        if np.any(np.diff(x) <= 0):
            raise ModelError("density knots must be strictly increasing")
        if np.any(y < 0):
            raise ModelError("density values must be nonnegative")
        h = np.diff(x)
        s = np.diff(y) / h
        mass = h * (y[:-1] + y[1:]) / 2
        cum = np.concatenate(([0.0], np.cumsum(mass)))
        tail = np.concatenate((np.cumsum(mass[::-1])[::-1], [0.0]))
        object.__setattr__(self, "knots", tuple(float(v) for v in x))
        object.__setattr__(self, "values", tuple(float(v) for v in y))
        for name, arr in (("_x", x), ("_y", y), ("_h", h), ("_s", s), ("_cum", cum), ("_tail", tail)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if abs(cum[-1] - 1.0) > NORM_TOL:
            raise ModelError(f"density integrates to {cum[-1]!r}, not 1")
        with np.errstate(divide="ignore", invalid="ignore"):
            kvv = x - tail / y
        kvv[-1] = x[-1]
        kvv.setflags(write=False)
        object.__setattr__(self, "_knot_vv", kvv)

    @classmethod
    def normalized(cls, knots: Sequence[float], values: Sequence[float]) -> "PiecewiseLinearDensity":
        x = np.asarray(knots, dtype=float)
        y = np.asarray(values, dtype=float)
        total = float(np.sum(np.diff(x) * (y[:-1] + y[1:]) / 2))
        if not total > 0:
            raise ModelError("density has no mass")
        return cls(tuple(x), tuple(y / total))

    @property
    def lo(self) -> float:
        return self.knots[0]

    @property
    def hi(self) -> float:
        return self.knots[-1]

    @property
    def total_mass(self) -> float:
        return float(self._cum[-1])

    def _locate(self, theta):
        t = np.clip(np.asarray(theta, dtype=float), self._x[0], self._x[-1])
        j = np.clip(np.searchsorted(self._x, t, side="right") - 1, 0, self._h.size - 1)
        return t, j, t - self._x[j]

    def pdf(self, theta):
        _, j, d = self._locate(theta)
        return self._y[j] + self._s[j] * d

    def cdf(self, theta):
        t, j, d = self._locate(theta)
        out = self._cum[j] + d * (self._y[j] + self._s[j] * d / 2)
        out = np.where(t >= self._x[-1], 1.0, out)
        return np.clip(out, 0.0, 1.0)

    def sf(self, theta):
        """Survival function, accumulated from the top so it is exactly 0 at the upper end."""
        _, j, d = self._locate(theta)
        f = self._y[j] + self._s[j] * d
        return self._tail[j + 1] + (self._h[j] - d) * (f + self._y[j + 1]) / 2

    def hazard(self, theta):
        with np.errstate(divide="ignore"):
            return self.pdf(theta) / self.sf(theta)

    def virtual_valuation(self, theta):
        t, j, d = self._locate(theta)
        f = self._y[j] + self._s[j] * d
        surv = self._tail[j + 1] + (self._h[j] - d) * (f + self._y[j + 1]) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            w = t - surv / f
        # limit at the upper end: survival vanishes while the density stays positive
        return np.where(t >= self._x[-1], self._x[-1], w)

    @property
    def vv_range(self) -> tuple[float, float]:
        return float(self._knot_vv[0]), float(self._knot_vv[-1])

    def inverse_virtual_valuation(self, target):
        """Smallest valuation whose virtual valuation reaches ``target``.

        Targets at or below the bottom of the range map to the lower end of
        the support; targets above the top map to ``nan``.  Assumes the
        virtual valuation is nondecreasing (see :func:`validate_hazard`).
        """
        w = np.asarray(target, dtype=float)
        kvv = self._knot_vv
        nseg = self._h.size
        j = np.clip(np.searchsorted(kvv, w, side="left") - 1, 0, nseg - 1)
        x, y, s, h = self._x[j], self._y[j], self._s[j], self._h[j]
        # on segment j the root solves 1.5 s d^2 + (2y + s(x - w)) d + y(x - w) - S_j = 0,
        # whose constant term is y * (vv(x_j) - w) < 0
        a = 1.5 * s
        b = 2 * y + s * (x - w)
        c = y * (x - w) - self._tail[j]
        disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            small = 2 * c / (-b - disc)
            large = (-b + disc) / (2 * a)
            d = np.where(b > 0, small, large)
        d = np.clip(np.nan_to_num(d, nan=0.0), 0.0, h)
        out = x + d
        out = np.where(w <= kvv[0], self._x[0], out)
        out = np.where(w == kvv[-1], self._x[-1], out)
        return np.where(w > kvv[-1], np.nan, out)

    def ppf(self, u):
        """Inverse CDF; ``u`` is clipped to [0, 1]."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0) * self._cum[-1]
        j = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, self._h.size - 1)
        y, s, rem = self._y[j], self._s[j], u - self._cum[j]
        root = np.sqrt(np.maximum(y * y + 2 * s * rem, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(rem > 0, 2 * rem / (y + root), 0.0)
        return self._x[j] + np.clip(np.nan_to_num(d, nan=0.0), 0.0, self._h[j])


def uniform_density(lo: float, hi: float) -> PiecewiseLinearDensity:
    return PiecewiseLinearDensity((lo, hi), (1.0 / (hi - lo),) * 2)


def linear_density(lo: float, hi: float, ratio: float) -> PiecewiseLinearDensity:
    """Linear density on [lo, hi] whose value at ``hi`` is ``ratio`` times its value at ``lo``."""
    if ratio <= 0:
        raise ModelError("ratio must be positive")
    return PiecewiseLinearDensity.normalized((lo, hi), (1.0, ratio))


@dataclass(frozen=True)
class ConsumerTypeModel:
    """Joint law of one consumer's (valuation, flexibility level).

    ``densities[l - 1]`` is the valuation density conditional on level ``l``.
    Every conditional density must be strictly positive on the whole support.
    """

    consumer_id: int
    support: tuple[float, float]
    level_mass: tuple[float, ...]
    densities: tuple[PiecewiseLinearDensity, ...]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.support)
        object.__setattr__(self, "support", (lo, hi))
        object.__setattr__(self, "level_mass", tuple(float(p) for p in self.level_mass))
        object.__setattr__(self, "densities", tuple(self.densities))
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or lo >= hi:
            raise ModelError(f"consumer {self.consumer_id}: support must satisfy 0 <= lo < hi")
        if len(self.level_mass) == 0 or len(self.level_mass) != len(self.densities):
            raise ModelError(f"consumer {self.consumer_id}: need one density per level")
        mass = np.asarray(self.level_mass)
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > MASS_TOL:
            raise ModelError(f"consumer {self.consumer_id}: level_mass must be a probability vector")
        for level, dens in enumerate(self.densities, start=1):
            if dens.lo != lo or dens.hi != hi:
                raise ModelError(
                    f"consumer {self.consumer_id}, level {level}: knots must start at {lo} and end at {hi}"
                )
            # linear pieces attain their minimum at a knot
            if min(dens.values) <= 0:
                raise ModelError(
                    f"consumer {self.consumer_id}, level {level}: density must be strictly positive"
                )

    @property
    def k(self) -> int:
        return len(self.densities)

    @property
    def theta_min(self) -> float:
        return self.support[0]

    @property
    def theta_max(self) -> float:
        return self.support[1]

    def density(self, level: int) -> PiecewiseLinearDensity:
        _check_level(self, level)
        return self.densities[level - 1]


def uniform_model(consumer_id: int, lo: float, hi: float, level_mass: Sequence[float] = (1.0,)) -> ConsumerTypeModel:
    dens = uniform_density(lo, hi)
    return ConsumerTypeModel(consumer_id, (lo, hi), tuple(level_mass), (dens,) * len(level_mass))


def _check_level(model: ConsumerTypeModel, level) -> None:
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)) or not 1 <= level <= model.k:
        raise DomainError(f"level {level!r} outside 1..{model.k}")


def _check_theta(model: ConsumerTypeModel, theta) -> None:
    t = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < model.theta_min) or np.any(t > model.theta_max):
        raise DomainError(
            f"valuation outside support [{model.theta_min}, {model.theta_max}] of consumer {model.consumer_id}"
        )


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def cdf(model: ConsumerTypeModel, level: int, theta):
    _check_level(model, level)
    _check_theta(model, theta)
    return _out(model.densities[level - 1].cdf(theta))


def pdf(model: ConsumerTypeModel, level: int, theta):
    _check_level(model, level)
    _check_theta(model, theta)
    return _out(model.densities[level - 1].pdf(theta))


def virtual_valuation(model: ConsumerTypeModel, level: int, theta):
    """``theta - (1 - F(theta | level)) / f(theta | level)``, equal to ``theta_max`` at the top."""
    _check_level(model, level)
    _check_theta(model, theta)
    return _out(model.densities[level - 1].virtual_valuation(theta))


def inverse_virtual_valuation(model: ConsumerTypeModel, level: int, w: float) -> float:
    """Smallest valuation whose virtual valuation is at least ``w``.

    Returns ``theta_min`` when ``w`` is below the range and raises
    :class:`RangeError` when it is above ``virtual_valuation(theta_max)``.
    """
    _check_level(model, level)
    w = float(w)
    if np.isnan(w):
        raise DomainError("target is nan")
    if w > model.theta_max:
        raise RangeError(
            f"target {w} exceeds the largest virtual valuation {model.theta_max} of consumer {model.consumer_id}"
        )
    return float(model.densities[level - 1].inverse_virtual_valuation(w))


def reserve_price(model: ConsumerTypeModel, level: int) -> float:
    """Valuation at which the level's virtual valuation crosses zero."""
    _check_level(model, level)
    if model.theta_max < 0:
        raise ModelError(f"consumer {model.consumer_id} is never profitable at level {level}")
    return inverse_virtual_valuation(model, level, 0.0)


@dataclass(frozen=True)
class HazardReport:
    """Grid check of the generalized monotone hazard rate condition.

    ``worst_violation`` is ``((b, b_prime), (theta, theta_prime), magnitude)``
    for the pair with the largest shortfall ``h(theta'|b') - h(theta|b)``
    among pairs with ``(theta, b)`` above ``(theta', b')``.  A magnitude of
    0 means no violation was found.
    """

    weak_ok: bool
    strict_ok: bool
    worst_violation: tuple[tuple[int, int], tuple[float, float], float]
    grid_resolution: int
    strict_margin: float = float("nan")


def validate_hazard(model: ConsumerTypeModel, grid_points: int = 256) -> HazardReport:
    if grid_points < 16:
        raise DomainError("grid_points must be at least 16")
    lo, hi = model.support
    # the hazard blows up at theta_max, so the grid stops one step short of it
    grid = lo + (hi - lo) * np.arange(grid_points) / grid_points
    H = np.vstack([d.hazard(grid) for d in model.densities])
    k, G = H.shape

    # running max over the lower set {(theta', b') : theta' <= theta, b' <= b}
    best = np.maximum.accumulate(np.maximum.accumulate(H, axis=1), axis=0)
    shortfall = best - H
    b, g = np.unravel_index(int(np.argmax(shortfall)), shortfall.shape)
    magnitude = float(shortfall[b, g])
    bp, gp = np.unravel_index(int(np.argmax(H[: b + 1, : g + 1])), (b + 1, g + 1))
    worst = ((int(b) + 1, int(bp) + 1), (float(grid[g]), float(grid[gp])), magnitude)

    strict_ok = True
    strict_margin = float("inf")
    if k > 1:
        below = np.maximum.accumulate(best[:-1], axis=1)
        gap = H[1:] - below
        strict_margin = float(gap.min())
        strict_ok = bool(np.all(gap > 0))
    weak_ok = magnitude <= HAZARD_TOL
    return HazardReport(weak_ok, weak_ok and strict_ok, worst, grid_points, strict_margin)


def validate_negative_reserve(model: ConsumerTypeModel) -> tuple[bool, ...]:
    return tuple(bool(d.virtual_valuation(model.theta_min) < 0) for d in model.densities)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_types(model: ConsumerTypeModel, rng, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` i.i.d. types; returns (valuations, levels)."""
    rng = _as_rng(rng)
    levels = rng.choice(model.k, size=size, p=np.asarray(model.level_mass)) + 1
    u = rng.random(size)
    theta = np.empty(size)
    for level in range(1, model.k + 1):
        mask = levels == level
        if mask.any():
            theta[mask] = model.densities[level - 1].ppf(u[mask])
    return theta, levels


def sample_type(model: ConsumerTypeModel, rng) -> tuple[float, int]:
    theta, levels = sample_types(model, rng, 1)
    return float(theta[0]), int(levels[0])


def _field(data, key, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    if key not in data:
        raise ConfigError(f"{path}.{key}: missing field")
    return data[key]


def _numbers(value, path, length=None):
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{path}: expected a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(f"{path}: expected {length} entries, got {len(value)}")
    return [float(v) for v in value]


def model_from_dict(data: dict, path: str = "model") -> ConsumerTypeModel:
    """Parse the JSON model format.

    Fields: ``consumer_id``, ``k``, ``support: [lo, hi]``, ``level_mass``,
    ``densities: [{knots, values}, ...]`` and an optional ``normalize``
    flag that rescales each density to unit mass.
    """
    consumer_id = _field(data, "consumer_id", path)
    if not isinstance(consumer_id, int) or isinstance(consumer_id, bool):
        raise ConfigError(f"{path}.consumer_id: expected an integer")
    k = _field(data, "k", path)
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError(f"{path}.k: expected a positive integer")
    support = _numbers(_field(data, "support", path), f"{path}.support", 2)
    mass = _numbers(_field(data, "level_mass", path), f"{path}.level_mass", k)
    raw = _field(data, "densities", path)
    if not isinstance(raw, list) or len(raw) != k:
        raise ConfigError(f"{path}.densities: expected {k} densities")
    normalize = bool(data.get("normalize", False))
    densities = []
    for idx, entry in enumerate(raw):
        p = f"{path}.densities[{idx}]"
        knots = _numbers(_field(entry, "knots", p), f"{p}.knots")
        values = _numbers(_field(entry, "values", p), f"{p}.values", len(knots))
        try:
            dens = (PiecewiseLinearDensity.normalized if normalize else PiecewiseLinearDensity)(knots, values)
        except ModelError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        densities.append(dens)
    try:
        return ConsumerTypeModel(consumer_id, tuple(support), tuple(mass), tuple(densities))
    except ModelError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def model_to_dict(model: ConsumerTypeModel) -> dict:
    return {
        "consumer_id": model.consumer_id,
        "k": model.k,
        "support": list(model.support),
        "level_mass": list(model.level_mass),
        "densities": [{"knots": list(d.knots), "values": list(d.values)} for d in model.densities],
    }
