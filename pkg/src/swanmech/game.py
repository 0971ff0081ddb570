"""Best-response dynamics and Nash verification for the A/J/B client game."""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from swanmech.economy import (
    Quote,
    Strategy,
    StrategyProfile,
    WelfareReport,
    payoff_at,
    welfare_report,
)
from swanmech.model import Scenario, SocialState

PAYOFF_TOL = 1e-9

# Tie-break order among equally good strategies: contribute, then buy, then abstain.
PRIORITY = (Strategy.JOIN, Strategy.BUY, Strategy.ABSTAIN)

TRACE_COLUMNS = ("round", "client_id", "type", "old_strategy", "new_strategy", "potential_value")


@dataclass(frozen=True)
class Deviation:
    client: int
    type_index: int
    current: Strategy
    alternative: Strategy
    gain: float


@dataclass(frozen=True)
class NashCheck:
    verified: bool
    witness: Optional[Deviation]
    deviations_checked: int

    def __bool__(self) -> bool:
        return self.verified


@dataclass(frozen=True)
class EquilibriumResult:
    final_profile: StrategyProfile
    converged: bool
    rounds: int
    nash_verified: bool
    state: SocialState
    welfare: WelfareReport
    deviations_checked: int
    witness: Optional[Deviation] = None
    trace: tuple[tuple, ...] = field(default=(), repr=False)


class _Counts:
    """Mutable (K, B) counters kept in step with a strategy list."""

    def __init__(self, n_types: int, types: tuple[int, ...], strategies: list[Strategy]):
        self.k = [0] * n_types
        self.b = [0] * n_types
        for t, s in zip(types, strategies):
            self.move(t, None, s)

    def move(self, t: int, old: Optional[Strategy], new: Optional[Strategy]) -> None:
        for s, sign in ((old, -1), (new, 1)):
            if s is Strategy.JOIN:
                self.k[t] += sign
            elif s is Strategy.BUY:
                self.b[t] += sign

    def state_with(self, t: int, current: Strategy, alt: Strategy) -> Optional[SocialState]:
        """State after the client of type t switches current -> alt; None if invalid."""
        k, b = list(self.k), list(self.b)
        for s, sign in ((current, -1), (alt, 1)):
            if s is Strategy.JOIN:
                k[t] += sign
            elif s is Strategy.BUY:
                b[t] += sign
        if sum(k) == 0 and sum(b) > 0:
            return None
        return SocialState(tuple(k), tuple(b))


def _options(
    t: int, current: Strategy, counts: _Counts, quote: Quote, scenario: Scenario
) -> dict[Strategy, float]:
    out = {}
    for alt in PRIORITY:
        state = counts.state_with(t, current, alt)
        if state is None:
            continue
        out[alt] = payoff_at(alt, t, state, quote, scenario)
    return out


def _choose(current: Strategy, options: dict[Strategy, float], tol: float) -> Strategy:
    best = max(options.values())
    if options[current] >= best - tol:
        return current
    return next(s for s in PRIORITY if s in options and options[s] >= best - tol)


def verify_nash(
    scenario: Scenario, quote: Quote, profile: StrategyProfile, tol: float = PAYOFF_TOL
) -> NashCheck:
    """Check every client against both alternative strategies."""
    strategies = list(profile.strategies)
    counts = _Counts(scenario.num_types, profile.client_types, strategies)
    checked = 0
    for n, (t, s) in enumerate(zip(profile.client_types, strategies)):
        here = payoff_at(s, t, counts.state_with(t, s, s), quote, scenario) if s is not Strategy.ABSTAIN else 0.0
        for alt in PRIORITY:
            if alt is s:
                continue
            state = counts.state_with(t, s, alt)
            if state is None:
                continue
            checked += 1
            gain = payoff_at(alt, t, state, quote, scenario) - here
            if gain > tol:
                return NashCheck(False, Deviation(n, t, s, alt, gain), checked)
    return NashCheck(True, None, checked)


def best_response_dynamics(
    scenario: Scenario,
    quote: Quote,
    initial: StrategyProfile,
    max_rounds: int = 1000,
    rng_seed: int = 0,
    tol: float = PAYOFF_TOL,
    record_trace: bool = False,
) -> EquilibriumResult:
    """Asynchronous best responses in a seeded random order each round.

    A client moves only when some strategy beats its current one by more
    than ``tol``; among near-best strategies J is preferred to B to A.
    """
    types = initial.client_types
    strategies = list(initial.strategies)
    counts = _Counts(scenario.num_types, types, strategies)
    initial.state(scenario.num_types)  # validates the starting profile
    rng = random.Random(rng_seed)
    order = list(range(len(types)))
    potential = getattr(quote, "potential", None)
    trace: list[tuple] = []
    converged = False
    rounds = 0
    for rnd in range(1, max_rounds + 1):
        rounds = rnd
        rng.shuffle(order)
        changed = False
        for n in order:
            t, cur = types[n], strategies[n]
            new = _choose(cur, _options(t, cur, counts, quote, scenario), tol)
            if new is cur:
                continue
            counts.move(t, cur, new)
            strategies[n] = new
            changed = True
            if record_trace:
                state = SocialState(tuple(counts.k), tuple(counts.b))
                phi = potential(state) if potential is not None else math.nan
                trace.append((rnd, n, t, cur.value, new.value, phi))
        if not changed:
            converged = True
            break
    profile = StrategyProfile(types, tuple(strategies))
    check = verify_nash(scenario, quote, profile, tol)
    return EquilibriumResult(
        final_profile=profile,
        converged=converged,
        rounds=rounds,
        nash_verified=check.verified,
        state=profile.state(scenario.num_types),
        welfare=welfare_report(profile, quote, scenario),
        deviations_checked=check.deviations_checked,
        witness=check.witness,
        trace=tuple(trace),
    )


def write_trace(rows: tuple[tuple, ...], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r, n, t, old, new, phi in rows:
            w.writerow([r, n, t, old, new, "" if math.isnan(phi) else f"{phi:.12g}"])
