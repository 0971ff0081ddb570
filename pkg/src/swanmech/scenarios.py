"""Seeded random scenario generator for property checks and experiment scripts."""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass

from swanmech.economy import UtilityFunction
from swanmech.model import ClientType, HeterogeneityParams, Scenario
from swanmech.optimizer import eps_min_bruteforce


@dataclass(frozen=True)
class RandomScenarioSpec:
    max_types: int = 4
    max_population: int = 6
    size_range: tuple[int, int] = (10, 300)
    scale_range: tuple[float, float] = (50.0, 500.0)
    exponents: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    scale_utility: tuple[float, float] = (1.0, 50.0)
    cost_ratio: tuple[float, float] = (0.0, 1.5)  # largest type's cost relative to U(eps_min)
    p_high: float = 0.4          # chance sigma^2 puts some type in the high-heterogeneity set
    p_iid: float = 0.5           # chance of sigma^2 = 0 in the low branch
    p_unconstrained: float = 0.5
    max_grid: int = 10_000


def _draw(rng: random.Random, spec: RandomScenarioSpec) -> Scenario | None:
    m = rng.randint(1, spec.max_types)
    sizes = sorted(rng.randint(*spec.size_range) for _ in range(m))
    pops = [rng.randint(1, spec.max_population) for _ in range(m)]
    if math.prod(n + 1 for n in pops) > spec.max_grid:
        return None
    scale = rng.uniform(*spec.scale_range)
    high = rng.random() < spec.p_high
    if high:
        s2 = rng.uniform(scale / sizes[-1] * 1.001, 3.0 * scale / sizes[0])
    elif rng.random() < spec.p_iid:
        s2 = 0.0
    else:
        s2 = rng.uniform(0.0, scale / sizes[-1])
    b = rng.choice(spec.exponents)
    peak = rng.uniform(*spec.scale_utility)
    # data_variance carries the whole d*gamma^2 product with d = 1
    params = HeterogeneityParams(1, scale, s2)
    types = tuple(ClientType(i + 1, d, 0.0, n) for i, (d, n) in enumerate(zip(sizes, pops)))
    floor = eps_min_bruteforce(Scenario(types, params, UtilityFunction("power", 1.0, b)))
    # Scale utility so U(eps_min) = peak: keeps welfare O(N * peak), far from
    # the range where absolute 1e-9 checks drown in float64 rounding.
    a = peak * floor**b
    unit = rng.uniform(*spec.cost_ratio) * peak / sizes[-1]
    costs = sorted(unit * d * rng.uniform(0.8, 1.2) for d in sizes)
    types = tuple(ClientType(i + 1, d, c, n) for i, (d, c, n) in enumerate(zip(sizes, costs, pops)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sc = Scenario(types, params, UtilityFunction("power", a, b))
    if not high and s2 > 0 and (b - 1) * floor < (b + 1) * s2:
        return None  # utility curvature assumption fails on the reachable error range
    if rng.random() >= spec.p_unconstrained:
        sc = sc.with_eps_req(floor * rng.uniform(1.0, 3.0))
    return sc


def random_scenario(rng: random.Random, spec: RandomScenarioSpec = RandomScenarioSpec()) -> Scenario:
    """Draw until a scenario passes the size and curvature filters."""
    while True:
        sc = _draw(rng, spec)
        if sc is not None:
            return sc


def random_scenarios(seed: int, count: int, spec: RandomScenarioSpec = RandomScenarioSpec()) -> list[Scenario]:
    rng = random.Random(seed)
    return [random_scenario(rng, spec) for _ in range(count)]
