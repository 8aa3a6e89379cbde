"""Reference economies and random instance generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import (
    ConsumerTypeModel,
    PiecewiseLinearDensity,
    linear_density,
    uniform_density,
    uniform_model,
    validate_hazard,
    validate_negative_reserve,
)
from .flex import FlexibilityStructure
from .mechanism import TypeProfile


@dataclass(frozen=True)
class Economy:
    name: str
    models: tuple[ConsumerTypeModel, ...]
    structure: FlexibilityStructure


def single_uniform() -> Economy:
    """One uniform[0, 1] consumer and one good; expected revenue 1/4."""
    return Economy("single-uniform", (uniform_model(0, 0.0, 1.0),), FlexibilityStructure((1,)))


def two_goods_example() -> Economy:
    """Two consumers and goods B_1 = {0}, B_2 = {0, 1}.

    Consumer 1 is uniform on [0.5, 2] x {1, 2}.  Consumer 0 always has level
    2; its valuation is uniform on [0.5, 1.5], a spread-out stand-in for the
    point mass at 1 that a positive density cannot express.
    """
    c0 = ConsumerTypeModel(0, (0.5, 1.5), (0.0, 1.0), (uniform_density(0.5, 1.5),) * 2)
    c1 = uniform_model(1, 0.5, 2.0, (0.5, 0.5))
    return Economy("two-goods-example", (c0, c1), FlexibilityStructure((1, 1)))


def flexible_discount() -> Economy:
    """Three heterogeneous consumers whose flexible types have stochastically lower valuations.

    Level-2 densities decrease linearly, so they dominate level 1 in hazard
    rate and satisfy the strict monotone hazard condition.
    """
    models = (
        ConsumerTypeModel(0, (0.0, 1.0), (0.6, 0.4), (uniform_density(0.0, 1.0), linear_density(0.0, 1.0, 0.4))),
        ConsumerTypeModel(1, (0.2, 1.4), (0.3, 0.7), (linear_density(0.2, 1.4, 1.5), linear_density(0.2, 1.4, 0.5))),
        ConsumerTypeModel(
            2,
            (0.0, 2.0),
            (0.5, 0.5),
            (
                PiecewiseLinearDensity.normalized((0.0, 1.0, 2.0), (0.6, 1.0, 0.8)),
                PiecewiseLinearDensity.normalized((0.0, 1.0, 2.0), (1.0, 0.7, 0.3)),
            ),
        ),
    )
    return Economy("flexible-discount", models, FlexibilityStructure((1, 1)))


def iid_levels(n: int = 4, k: int = 3, m=(1, 1, 1)) -> Economy:
    """Identical consumers whose valuation is uniform[0, 1] independently of the level."""
    mass = (1.0 / k,) * k
    return Economy("iid-levels", tuple(uniform_model(i, 0.0, 1.0, mass) for i in range(n)), FlexibilityStructure(tuple(m)))


FIXTURES = {
    "single-uniform": single_uniform,
    "two-goods-example": two_goods_example,
    "flexible-discount": flexible_discount,
    "iid-levels": iid_levels,
}


def _candidate_densities(rng: np.random.Generator, lo: float, hi: float, k: int):
    kind = rng.integers(3)
    if kind == 0:
        # level-independent valuation
        return (linear_density(lo, hi, float(np.exp(rng.uniform(-1.2, 1.2)))),) * k
    if kind == 1:
        # linear densities tilting downward as the level grows: hazard-rate ordered
        ratios = np.sort(np.exp(rng.uniform(-1.5, 1.5, size=k)))[::-1]
        return tuple(linear_density(lo, hi, float(r)) for r in ratios)
    mid = float(rng.uniform(lo + 0.2 * (hi - lo), lo + 0.8 * (hi - lo)))
    out = []
    for _ in range(k):
        ends = rng.uniform(0.2, 1.0, size=2)
        out.append(PiecewiseLinearDensity.normalized((lo, mid, hi), (ends[0], 1.0, ends[1])))
    return tuple(out)


def random_model(rng: np.random.Generator, consumer_id: int, k: int, max_tries: int = 100) -> ConsumerTypeModel:
    """A random model passing the weak hazard check and the negative-reserve check."""
    for _ in range(max_tries):
        lo = float(rng.uniform(0.0, 0.5))
        hi = lo + float(rng.uniform(0.5, 2.0))
        mass = rng.dirichlet(np.ones(k))
        mass = tuple(float(p) for p in mass[:-1]) + (1.0 - float(mass[:-1].sum()),)
        model = ConsumerTypeModel(consumer_id, (lo, hi), mass, _candidate_densities(rng, lo, hi, k))
        if all(validate_negative_reserve(model)) and validate_hazard(model, 128).weak_ok:
            return model
    raise RuntimeError("could not draw a valid model")


def random_structure(rng: np.random.Generator, max_k: int = 3, max_goods: int = 5) -> FlexibilityStructure:
    k = int(rng.integers(1, max_k + 1))
    while True:
        m = tuple(int(v) for v in rng.integers(0, 3, size=k))
        if 1 <= sum(m) <= max_goods:
            return FlexibilityStructure(m)


def random_instance(rng: np.random.Generator, max_consumers: int = 5, max_goods: int = 5, max_k: int = 3):
    """Random ``(models, structure, profile)`` with a truthful profile drawn from the models."""
    structure = random_structure(rng, max_k, max_goods)
    N = int(rng.integers(1, max_consumers + 1))
    models = tuple(random_model(rng, i, structure.k) for i in range(N))
    theta, levels = [], []
    for model in models:
        b = int(rng.choice(model.k, p=np.asarray(model.level_mass))) + 1
        theta.append(float(model.densities[b - 1].ppf(rng.random())))
        levels.append(b)
    return models, structure, TypeProfile(tuple(theta), tuple(levels))
