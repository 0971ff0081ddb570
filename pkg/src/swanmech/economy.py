"""Utility, client payoffs, welfare under both frameworks, platform cost."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from swanmech.model import NO_MODEL, Scenario, SocialState, generalization_error


class InvalidProfileError(ValueError):
    """A client buys while nobody trains a model."""


class Strategy(str, Enum):
    ABSTAIN = "A"
    JOIN = "J"
    BUY = "B"

    def __str__(self) -> str:
        return self.value


class Quote(Protocol):
    """What a mechanism must expose: state-dependent price and rewards."""

    def price(self, state: SocialState) -> float: ...

    def reward(self, state: SocialState, i: int) -> float: ...


@dataclass(frozen=True)
class UtilityFunction:
    """Model utility as a function of generalization error.

    ``kind="power"`` gives ``scale * eps**(-exponent)``, evaluated in the log
    domain so tiny errors overflow to ``inf`` instead of raising.
    ``kind="table"`` linearly interpolates ``table`` = ((eps, u), ...) with
    flat extrapolation outside the breakpoints.
    """

    kind: str = "power"
    scale: float = 40.0
    exponent: float = 16.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "power":
            if not (self.scale > 0 and self.exponent > 0):
                raise ValueError("power utility needs positive scale and exponent")
        elif self.kind == "table":
            pts = tuple((float(e), float(u)) for e, u in self.table)
            if len(pts) < 2:
                raise ValueError("table utility needs at least two points")
            es = [e for e, _ in pts]
            us = [u for _, u in pts]
            if any(e <= 0 for e in es) or es != sorted(es) or len(set(es)) != len(es):
                raise ValueError("table errors must be positive and strictly increasing")
            if any(u < 0 for u in us) or any(b > a for a, b in zip(us, us[1:])):
                raise ValueError("table utilities must be non-negative and non-increasing")
            object.__setattr__(self, "table", pts)
        else:
            raise ValueError(f"unknown utility kind {self.kind!r}")

    def __call__(self, eps: float) -> float:
        return utility(eps, self)

    def values(self, eps: np.ndarray) -> np.ndarray:
        """Vectorised utility; ``inf`` entries (no model) map to 0."""
        eps = np.asarray(eps, dtype=float)
        out = np.zeros_like(eps)
        live = np.isfinite(eps)
        if self.kind == "power":
            with np.errstate(over="ignore"):
                out[live] = np.exp(math.log(self.scale) - self.exponent * np.log(eps[live]))
        else:
            es, us = zip(*self.table)
            out[live] = np.interp(eps[live], es, us)
        return out

    def derivative(self, eps: float) -> float:
        if eps <= 0:
            raise ValueError("utility derivative needs eps > 0")
        if math.isinf(eps):
            return 0.0
        if self.kind == "power":
            return -self.exponent * utility(eps, self) / eps
        es, us = zip(*self.table)
        if eps < es[0] or eps >= es[-1]:
            return 0.0
        j = int(np.searchsorted(es, eps, side="right")) - 1
        return (us[j + 1] - us[j]) / (es[j + 1] - es[j])

    def second_derivative(self, eps: float) -> float:
        if eps <= 0:
            raise ValueError("utility second derivative needs eps > 0")
        if math.isinf(eps):
            return 0.0
        if self.kind == "power":
            b = self.exponent
            return b * (b + 1) * utility(eps, self) / eps**2
        return 0.0


def utility(eps: float, u: UtilityFunction) -> float:
    if eps == NO_MODEL:
        return 0.0
    if not eps > 0:
        raise ValueError(f"utility needs eps > 0, got {eps}")
    if u.kind == "power":
        log_u = math.log(u.scale) - u.exponent * math.log(eps)
        return math.exp(log_u) if log_u < 709.0 else math.inf
    return float(u.values(np.array([eps]))[0])


def curvature_violations(
    u: UtilityFunction, client_variance: float, lo: float, hi: float, points: int = 1000
) -> list[float]:
    """Grid points in [lo, hi] where (eps - s2) U'' + 2 U' < 0."""
    bad = []
    for eps in np.linspace(lo, hi, points):
        eps = float(eps)
        if eps <= 0 or eps == client_variance:
            continue
        lhs = (eps - client_variance) * u.second_derivative(eps) + 2 * u.derivative(eps)
        scale = abs(2 * u.derivative(eps)) + abs((eps - client_variance) * u.second_derivative(eps))
        if lhs < -1e-12 * max(1.0, scale):
            bad.append(eps)
    return bad


def check_curvature(scenario: Scenario, eps_lo: float, points: int = 1000) -> bool:
    """Validate the increasing-marginal-utility condition on the reachable range.

    The range runs from ``eps_lo`` (normally eps_min) to the error of a
    single smallest-type participant.  Violations only warn.
    """
    hi = max(eps_lo, scenario.params.scale / scenario.data_sizes[0])
    bad = curvature_violations(
        scenario.utility, scenario.params.client_variance, eps_lo, hi, points
    )
    if bad:
        warnings.warn(
            f"utility curvature condition fails on {len(bad)}/{points} grid points "
            f"in [{eps_lo:.6g}, {hi:.6g}] (first at eps={bad[0]:.6g})",
            stacklevel=2,
        )
    return not bad


@dataclass(frozen=True)
class StrategyProfile:
    """One strategy per client; ``client_types[n]`` is client n's type index."""

    client_types: tuple[int, ...]
    strategies: tuple[Strategy, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "client_types", tuple(int(t) for t in self.client_types))
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))
        if len(self.client_types) != len(self.strategies):
            raise ValueError("one strategy per client required")

    @classmethod
    def uniform(cls, populations: Sequence[int], strategy: Strategy | str = Strategy.ABSTAIN) -> "StrategyProfile":
        types = tuple(i for i, n in enumerate(populations) for _ in range(n))
        return cls(types, (Strategy(strategy),) * len(types))

    @classmethod
    def from_state(cls, state: SocialState, populations: Sequence[int]) -> "StrategyProfile":
        types, strats = [], []
        for i, n in enumerate(populations):
            k, b = state.participants[i], state.buyers[i]
            if k + b > n:
                raise ValueError(f"type {i} over capacity")
            types += [i] * n
            strats += [Strategy.JOIN] * k + [Strategy.BUY] * b + [Strategy.ABSTAIN] * (n - k - b)
        return cls(tuple(types), tuple(strats))

    @property
    def num_types(self) -> int:
        return max(self.client_types) + 1 if self.client_types else 0

    def state(self, num_types: int | None = None) -> SocialState:
        m = self.num_types if num_types is None else num_types
        k, b = [0] * m, [0] * m
        for t, s in zip(self.client_types, self.strategies):
            if s is Strategy.JOIN:
                k[t] += 1
            elif s is Strategy.BUY:
                b[t] += 1
        if sum(k) == 0 and sum(b) > 0:
            raise InvalidProfileError("profile has buyers but no participants")
        return SocialState(tuple(k), tuple(b))

    def replace(self, n: int, strategy: Strategy | str) -> "StrategyProfile":
        s = list(self.strategies)
        s[n] = Strategy(strategy)
        return StrategyProfile(self.client_types, tuple(s))


def payoff_at(
    strategy: Strategy, type_index: int, state: SocialState, quote: Quote, scenario: Scenario
) -> float:
    """Payoff of a type-``type_index`` client playing ``strategy`` at ``state``.

    ``state`` must already include the client's own choice.
    """
    strategy = Strategy(strategy)
    if strategy is Strategy.ABSTAIN:
        return 0.0
    if state.total_participants == 0:
        raise InvalidProfileError("no model exists at an empty coalition")
    u = utility(generalization_error(state, scenario), scenario.utility)
    if strategy is Strategy.JOIN:
        return u - scenario.types[type_index].cost + quote.reward(state, type_index)
    return u - quote.price(state)


def payoff(n: int, profile: StrategyProfile, quote: Quote, scenario: Scenario) -> float:
    s = profile.strategies[n]
    if s is Strategy.ABSTAIN:
        return 0.0
    state = profile.state(scenario.num_types)
    return payoff_at(s, profile.client_types[n], state, quote, scenario)


def welfare_mots(state: SocialState, scenario: Scenario) -> float:
    if state.total_participants == 0:
        return 0.0
    u = utility(generalization_error(state, scenario), scenario.utility)
    return sum(
        k * (u - t.cost) + b * u
        for k, b, t in zip(state.participants, state.buyers, scenario.types)
    )


def welfare_fl(state: SocialState, scenario: Scenario) -> float:
    if state.total_participants == 0:
        return 0.0
    u = utility(generalization_error(state, scenario), scenario.utility)
    return sum(k * (u - t.cost) for k, t in zip(state.participants, scenario.types))


def platform_cost(state: SocialState, quote: Quote) -> float:
    """Extra incentive cost: rewards paid out beyond buyer payments, floored at 0."""
    if state.total_participants == 0:
        return 0.0
    paid = sum(k * quote.reward(state, i) for i, k in enumerate(state.participants) if k)
    collected = state.total_buyers * quote.price(state) if state.total_buyers else 0.0
    return max(0.0, paid - collected)


@dataclass(frozen=True)
class WelfareReport:
    w_mots: float
    w_fl: float
    platform_cost: float
    client_payoffs: tuple[float, ...]


def welfare_report(profile: StrategyProfile, quote: Quote, scenario: Scenario) -> WelfareReport:
    state = profile.state(scenario.num_types)
    per_type = [0.0] * scenario.num_types
    for n, t in enumerate(profile.client_types):
        per_type[t] += payoff(n, profile, quote, scenario)
    return WelfareReport(
        w_mots=welfare_mots(state, scenario),
        w_fl=welfare_fl(state, scenario),
        platform_cost=platform_cost(state, quote),
        client_payoffs=tuple(per_type),
    )
