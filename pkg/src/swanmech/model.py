"""Problem instances and the closed-form generalization-error model.

The error of a model trained by a coalition with ``K_i`` participants of
type ``i`` is

    eps(K) = d*gamma2/K**2 * sum_i K_i/D_i + (K-1)/K * sigma2,   K = sum_i K_i

and everything about network effects (sign thresholds, regions, coalition
merges) follows from it.  An empty coalition trains no model; its error is
``NO_MODEL`` (``+inf``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from swanmech.economy import UtilityFunction

NO_MODEL = math.inf

# Absolute tolerance for threshold comparisons; boundaries resolve toward
# the non-negative-effect side.
THRESHOLD_TOL = 1e-12


class DomainError(ValueError):
    """Operation undefined at the given state (usually an empty coalition)."""


class CapacityError(ValueError):
    """No free client of the requested type is left to join."""


@dataclass(frozen=True)
class ClientType:
    index: int
    data_size: int
    cost: float
    population: int

    def __post_init__(self) -> None:
        if self.data_size < 1:
            raise ValueError(f"data_size must be >= 1, got {self.data_size}")
        if self.population < 1:
            raise ValueError(f"population must be >= 1, got {self.population}")
        if self.cost < 0:
            raise ValueError(f"cost must be >= 0, got {self.cost}")


@dataclass(frozen=True)
class HeterogeneityParams:
    feature_dim: int
    data_variance: float
    client_variance: float = 0.0

    def __post_init__(self) -> None:
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if not self.data_variance > 0:
            raise ValueError("data_variance must be > 0")
        if self.client_variance < 0:
            raise ValueError("client_variance must be >= 0")

    @property
    def scale(self) -> float:
        """d * gamma^2."""
        return self.feature_dim * self.data_variance

    @property
    def hetero_point(self) -> float:
        """sigma^2 / (d * gamma^2)."""
        return self.client_variance / self.scale


@dataclass(frozen=True)
class Scenario:
    types: tuple[ClientType, ...]
    params: HeterogeneityParams
    utility: "UtilityFunction"
    eps_req: float = math.inf

    def __post_init__(self) -> None:
        object.__setattr__(self, "types", tuple(self.types))
        if not self.types:
            raise ValueError("scenario needs at least one client type")
        sizes = [t.data_size for t in self.types]
        if sizes != sorted(sizes):
            raise ValueError("types must be sorted by non-decreasing data_size")
        costs = [t.cost for t in self.types]
        if costs != sorted(costs):
            warnings.warn("participation costs are not monotone in data size", stacklevel=3)
        if not self.eps_req > 0:
            raise ValueError("eps_req must be positive")

    @property
    def num_types(self) -> int:
        return len(self.types)

    @property
    def data_sizes(self) -> tuple[int, ...]:
        return tuple(t.data_size for t in self.types)

    @property
    def costs(self) -> tuple[float, ...]:
        return tuple(t.cost for t in self.types)

    @property
    def populations(self) -> tuple[int, ...]:
        return tuple(t.population for t in self.types)

    @property
    def total_clients(self) -> int:
        return sum(self.populations)

    @property
    def high_types(self) -> tuple[int, ...]:
        """Zero-based indices of types with D_i > d*gamma^2/sigma^2."""
        s2 = self.params.client_variance
        if s2 == 0:
            return ()
        bound = self.params.scale / s2
        return tuple(i for i, t in enumerate(self.types) if t.data_size > bound)

    @property
    def low_heterogeneity(self) -> bool:
        """True iff sigma^2 <= d*gamma^2/D_I, i.e. no high types."""
        return not self.high_types

    def with_eps_req(self, eps_req: float) -> "Scenario":
        return Scenario(self.types, self.params, self.utility, eps_req)

    def with_costs(self, costs: Sequence[float]) -> "Scenario":
        types = tuple(
            ClientType(t.index, t.data_size, float(c), t.population)
            for t, c in zip(self.types, costs)
        )
        return Scenario(types, self.params, self.utility, self.eps_req)


@dataclass(frozen=True)
class SocialState:
    participants: tuple[int, ...]
    buyers: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        k = tuple(int(x) for x in self.participants)
        b = tuple(int(x) for x in self.buyers) if self.buyers else (0,) * len(k)
        if len(b) != len(k):
            raise ValueError("participants and buyers must have equal length")
        if any(x < 0 for x in k + b):
            raise ValueError("counts must be non-negative")
        if sum(k) == 0 and sum(b) > 0:
            raise ValueError("buyers require at least one participant (no model to buy)")
        object.__setattr__(self, "participants", k)
        object.__setattr__(self, "buyers", b)

    @property
    def total_participants(self) -> int:
        return sum(self.participants)

    @property
    def total_buyers(self) -> int:
        return sum(self.buyers)

    def check_capacity(self, populations: Sequence[int]) -> None:
        for i, (k, b, n) in enumerate(zip(self.participants, self.buyers, populations)):
            if k + b > n:
                raise ValueError(f"type {i}: K+B = {k + b} exceeds population {n}")

    def add_participant(self, i: int) -> "SocialState":
        k = list(self.participants)
        k[i] += 1
        return SocialState(tuple(k), self.buyers)

    @classmethod
    def full_dissemination(cls, k: Sequence[int], populations: Sequence[int]) -> "SocialState":
        """Participants ``k``, every other client buys (nobody buys if ``k`` is empty)."""
        k = tuple(int(x) for x in k)
        if sum(k) == 0:
            return cls(k, (0,) * len(k))
        return cls(k, tuple(n - x for n, x in zip(populations, k)))


@dataclass(frozen=True)
class RegionReport:
    type_index: int
    region: str
    eta: float
    inv_d: float
    hetero_point: float


def _counts(state: SocialState | Sequence[int]) -> tuple[int, ...]:
    if isinstance(state, SocialState):
        return state.participants
    return tuple(int(x) for x in state)


def error_from_counts(
    counts: Sequence[float], data_sizes: Sequence[float], params: HeterogeneityParams
) -> float:
    """Generalization error for (possibly fractional) participant counts."""
    k = float(sum(counts))
    if k <= 0:
        return NO_MODEL
    s = sum(c / d for c, d in zip(counts, data_sizes))
    return params.scale * s / k**2 + (k - 1.0) / k * params.client_variance


def generalization_error(state: SocialState | Sequence[int], scenario: Scenario) -> float:
    return error_from_counts(_counts(state), scenario.data_sizes, scenario.params)


def error_partial(state: SocialState | Sequence[int], scenario: Scenario, i: int) -> float:
    """d eps / d K_i on the continuous relaxation."""
    k_vec = _counts(state)
    k = sum(k_vec)
    if k == 0:
        raise DomainError("error_partial needs a non-empty coalition")
    s = sum(c / d for c, d in zip(k_vec, scenario.data_sizes))
    scale = scenario.params.scale
    d_i = scenario.data_sizes[i]
    return scale * (k / d_i - 2.0 * s) / k**3 + scenario.params.client_variance / k**2


def eta_threshold(state: SocialState | Sequence[int], scenario: Scenario) -> float:
    """Largest 1/D a newcomer may have and still not raise the error."""
    k_vec = _counts(state)
    k = sum(k_vec)
    if k == 0:
        raise DomainError("eta_threshold needs a non-empty coalition")
    s = sum(c / d for c, d in zip(k_vec, scenario.data_sizes))
    p = scenario.params
    return (2 * k + 1) * s / k**2 - (k + 1) * p.client_variance / (p.scale * k)


def network_effect(state: SocialState, scenario: Scenario, newcomer_type: int) -> float:
    """eps(K) - eps(K + newcomer); positive means the newcomer helps."""
    k_vec = _counts(state)
    if sum(k_vec) == 0:
        raise DomainError("network effects are defined for non-empty coalitions")
    if isinstance(state, SocialState):
        used = state.participants[newcomer_type] + state.buyers[newcomer_type]
    else:
        used = k_vec[newcomer_type]
    if used >= scenario.populations[newcomer_type]:
        raise CapacityError(f"no free type-{newcomer_type} client left")
    grown = list(k_vec)
    grown[newcomer_type] += 1
    return generalization_error(k_vec, scenario) - generalization_error(grown, scenario)


def newcomer_effect(
    counts: Sequence[int], data_sizes: Sequence[int], params: HeterogeneityParams, d_new: float
) -> float:
    """Effect of a newcomer with arbitrary data size, ignoring population limits."""
    before = error_from_counts(counts, data_sizes, params)
    after = error_from_counts(list(counts) + [1], list(data_sizes) + [d_new], params)
    return before - after


def classify_region(state: SocialState | Sequence[int], scenario: Scenario, j: int) -> RegionReport:
    eta = eta_threshold(state, scenario)
    inv_d = 1.0 / scenario.data_sizes[j]
    h = scenario.params.hetero_point
    tol = THRESHOLD_TOL
    if inv_d <= eta + tol:
        region = "II" if inv_d >= h - tol else "I"
    else:
        region = "III" if inv_d <= h + tol else "IV"
    return RegionReport(j, region, eta, inv_d, h)


def harmonic_mean(counts: Sequence[int], data_sizes: Sequence[int]) -> float:
    k = sum(counts)
    if k == 0:
        raise DomainError("harmonic mean of an empty coalition")
    return k / sum(c / d for c, d in zip(counts, data_sizes))


def coalition_merge_beneficial(
    a: SocialState | Sequence[int], b: SocialState | Sequence[int], scenario: Scenario
) -> bool:
    """Whether merging two disjoint coalitions beats the worse of them.

    Decided by the harmonic-mean criterion; the caller-side labelling
    (H_a <= H_b) is handled here.
    """
    ka, kb = _counts(a), _counts(b)
    if sum(ka) == 0 or sum(kb) == 0:
        raise DomainError("both coalitions must be non-empty")
    for x, y, n in zip(ka, kb, scenario.populations):
        if x + y > n:
            raise CapacityError("coalitions exceed population when merged")
    sizes = scenario.data_sizes
    ha, hb = harmonic_mean(ka, sizes), harmonic_mean(kb, sizes)
    na, nb = sum(ka), sum(kb)
    if ha > hb:
        ha, hb, na, nb = hb, ha, nb, na
    p = scenario.params
    rhs = (hb * nb + na * (2 * hb - ha)) / (ha * hb * (na + nb) / p.feature_dim)
    return p.client_variance / p.data_variance < rhs


def example1_threshold(d1: float, d2: float, k2: int) -> int:
    """Smallest K_1 from which the error strictly falls as type-1 clients join.

    Two types, sigma^2 = 0, ``k2`` type-2 participants.  The error drops
    from K_1 to K_1 + 1 exactly when K_1 exceeds the positive root r of a
    quadratic, so the answer is floor(r) + 1 clamped at zero.  This equals
    ceil(r) except when r is an integer, where eps(r) == eps(r + 1).
    Integer inputs are handled in exact arithmetic.
    """
    if d1 > d2:
        raise ValueError("expects d1 <= d2")
    if k2 < 1:
        raise ValueError("expects k2 >= 1")
    shift = 2 * k2 * d1 + d2
    disc = 4 * k2**2 * (d2 - d1) ** 2 + d2**2
    if all(float(x).is_integer() for x in (d1, d2, k2)):
        shift, disc, den = int(shift), int(disc), int(2 * d2)
        floor_r = (math.isqrt(disc) - shift) // den
    else:
        floor_r = math.floor((math.sqrt(disc) - shift) / (2 * d2))
    return max(0, floor_r + 1)
