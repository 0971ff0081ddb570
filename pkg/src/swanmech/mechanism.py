"""Pricing/reward mechanisms over social states.

Every mechanism is a ``MechanismQuote``: a price and per-type rewards that
are functions of the realised state.  The game module only calls
``price`` and ``reward``; ``potential`` is optional bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from swanmech.economy import utility
from swanmech.model import Scenario, SocialState, generalization_error
from swanmech.optimizer import (
    DegeneratePotentialError,
    LagrangianContext,
    SolveResult,
    lagrangian,
    theta,
)

TAU_FLOOR = 1e-9

LOW = "low-heterogeneity"
HIGH = "high-heterogeneity"


@dataclass(frozen=True)
class MechanismQuote:
    name: str
    price_fn: Callable[[SocialState], float] = field(repr=False)
    reward_fn: Callable[[SocialState, int], float] = field(repr=False)
    branch: Optional[str] = None
    tau: float = 0.0
    L_floor: float = 0.0
    potential_fn: Optional[Callable[[SocialState], float]] = field(default=None, repr=False)

    def price(self, state: SocialState) -> float:
        return self.price_fn(state)

    def reward(self, state: SocialState, i: int) -> float:
        return self.reward_fn(state, i)

    def potential(self, state: SocialState) -> float:
        """tau * (Theta(K) - L0) for SWAN; NaN for mechanisms without one."""
        if self.potential_fn is None:
            return math.nan
        return self.potential_fn(state)


def swan_quote(
    scenario: Scenario, solve: SolveResult, ctx: LagrangianContext, tau0: float = TAU_FLOOR
) -> MechanismQuote:
    """Prices and rewards that make every client's payoff a share of Theta - L0.

    Theta is the multilinear interpolation of L when no type is
    high-heterogeneity, and L itself otherwise.
    """
    low = scenario.low_heterogeneity
    floor = ctx.L_floor
    cache: dict[tuple[int, ...], float] = {}

    def big_theta(state: SocialState) -> float:
        k = state.participants
        if k not in cache:
            cache[k] = theta(k, ctx, scenario) if low else lagrangian(k, ctx, scenario)
        return cache[k]

    w_star = solve.w_star
    if w_star > 0:
        gap = lagrangian(solve.k_star, ctx, scenario) - floor
        if not gap > 1e-12 * max(1.0, abs(floor)):
            raise DegeneratePotentialError(
                f"L(K*) - L0 = {gap:.3g} with positive optimal welfare {w_star:.6g}"
            )
        tau = (w_star / scenario.total_clients) / gap
    else:
        tau = tau0

    def share(state: SocialState) -> float:
        return tau * (big_theta(state) - floor)

    def model_utility(state: SocialState) -> float:
        return utility(generalization_error(state, scenario), scenario.utility)

    def price(state: SocialState) -> float:
        return model_utility(state) - share(state)

    def reward(state: SocialState, i: int) -> float:
        return scenario.types[i].cost - model_utility(state) + share(state)

    return MechanismQuote(
        name="swan",
        price_fn=price,
        reward_fn=reward,
        branch=LOW if low else HIGH,
        tau=tau,
        L_floor=floor,
        potential_fn=share,
    )


def modified_fl_quote(scenario: Scenario, fixed_reward: float) -> MechanismQuote:
    """Benchmark: price equals model utility, flat participation reward."""

    def price(state: SocialState) -> float:
        return utility(generalization_error(state, scenario), scenario.utility)

    return MechanismQuote(
        name="modified_fl",
        price_fn=price,
        reward_fn=lambda state, i: fixed_reward,
    )


def zero_quote() -> MechanismQuote:
    """No price, no reward: the raw trading game."""
    return MechanismQuote(name="zero", price_fn=lambda state: 0.0, reward_fn=lambda state, i: 0.0)


def quote_dump(quote: MechanismQuote, solve: SolveResult) -> dict:
    state = solve.state
    return {
        "mechanism": quote.name,
        "branch": quote.branch,
        "tau": quote.tau,
        "L_floor": quote.L_floor,
        "price_at_kstar": quote.price(state),
        "rewards_at_kstar": [quote.reward(state, i) for i in range(len(state.participants))],
    }
