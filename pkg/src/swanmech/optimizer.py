"""Optimal social states under an error requirement.

Two independent routes find the welfare-maximising participation vector K*
(every non-participant buys, so welfare is ``N*U(eps(K)) - K.C``):

* ``solve_bruteforce`` enumerates the whole grid ``prod_i {0..N_i}``.
* ``solve_structured`` only visits states reachable from the all-or-none
  corners by coordinate-wise moves to local maxima of the Lagrangian, or to
  the edge of the feasible region when the requirement is finite.

Both score states with the same vectorised evaluator, so ties resolve
identically: larger welfare, then smaller error, then lexicographically
smaller K.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from swanmech.economy import utility
from swanmech.model import (
    NO_MODEL,
    Scenario,
    SocialState,
    error_partial,
    generalization_error,
)

log = logging.getLogger(__name__)

ENUM_GUARD = 10**7
SINGULAR_TOL = 1e-12
FEAS_RTOL = 1e-12
CHUNK = 1 << 18


class InfeasibleError(ValueError):
    """The error requirement is below the smallest achievable error."""


class SingularityError(ArithmeticError):
    """The Lagrangian penalty (eps - sigma^2)^-1 is singular at this state."""


class DegeneratePotentialError(ArithmeticError):
    """The Lagrangian is flat at the optimum, so the incentive ratio is undefined."""


@dataclass(frozen=True)
class LagrangianContext:
    lam: float
    eps_req: float
    L_floor: float
    corner_values: dict[tuple[int, ...], float] = field(repr=False)
    singular_states: tuple[tuple[int, ...], ...] = ()
    binding: bool = False
    bracket: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SolveResult:
    k_star: tuple[int, ...]
    b_star: tuple[int, ...]
    w_star: float
    eps_star: float
    binding: bool
    lambda_star: float

    @property
    def state(self) -> SocialState:
        return SocialState(self.k_star, self.b_star)


@dataclass(frozen=True)
class AlignmentReport:
    holds: bool
    psi: tuple[float, ...]
    failing_witnesses: tuple[tuple[tuple[int, ...], int], ...]
    sampled: bool = False


# -- vectorised evaluation ---------------------------------------------------


def feasible(eps: np.ndarray | float, eps_req: float) -> np.ndarray | bool:
    if math.isinf(eps_req):
        return np.ones_like(eps, dtype=bool) if isinstance(eps, np.ndarray) else True
    return eps <= eps_req + FEAS_RTOL * max(1.0, abs(eps_req))


def errors_of(k: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Generalization error for each row of an (M, I) count array."""
    k = np.asarray(k, dtype=float)
    total = k.sum(axis=1)
    s = k @ (1.0 / np.asarray(scenario.data_sizes, dtype=float))
    p = scenario.params
    out = np.full(total.shape, np.inf)
    live = total > 0
    t = total[live]
    out[live] = p.scale * s[live] / t**2 + (t - 1.0) / t * p.client_variance
    return out


def welfare_of(k: np.ndarray, scenario: Scenario, eps: np.ndarray | None = None) -> np.ndarray:
    """Welfare at full dissemination: sum_i [N_i U(eps) - K_i C_i]; 0 for K = 0."""
    k = np.asarray(k, dtype=float)
    if eps is None:
        eps = errors_of(k, scenario)
    u = scenario.utility.values(eps)
    w = scenario.total_clients * u - k @ np.asarray(scenario.costs, dtype=float)
    w[~np.isfinite(eps)] = 0.0
    return w


def _penalty_offset(eps_req: float, client_variance: float) -> float:
    if math.isinf(eps_req):
        return 0.0
    gap = eps_req - client_variance
    if abs(gap) < SINGULAR_TOL:
        raise SingularityError("eps_req coincides with sigma^2")
    return 1.0 / gap


def lagrangian_of(
    k: np.ndarray, scenario: Scenario, lam: float, eps_req: float | None = None
) -> np.ndarray:
    """Vectorised Lagrangian; singular states come back as NaN."""
    eps_req = scenario.eps_req if eps_req is None else eps_req
    eps = errors_of(k, scenario)
    w = welfare_of(k, scenario, eps)
    if lam == 0:
        return w
    s2 = scenario.params.client_variance
    gap = eps - s2
    pen = np.zeros_like(eps)
    live = np.isfinite(eps)
    singular = live & (np.abs(gap) < SINGULAR_TOL)
    ok = live & ~singular
    pen[ok] = 1.0 / gap[ok]
    pen[singular] = np.nan
    return w + lam * (pen - _penalty_offset(eps_req, s2))


def lagrangian(state: SocialState | Sequence[int], ctx: LagrangianContext, scenario: Scenario) -> float:
    k = state.participants if isinstance(state, SocialState) else tuple(state)
    eps = generalization_error(k, scenario)
    s2 = scenario.params.client_variance
    if eps == NO_MODEL:
        pen = 0.0
        u_total = 0.0
    elif ctx.lam == 0:
        pen = 0.0  # penalty is switched off; eps = sigma^2 is harmless here
        u_total = scenario.total_clients * utility(eps, scenario.utility)
    else:
        if abs(eps - s2) < SINGULAR_TOL:
            raise SingularityError(f"eps(K) = sigma^2 at K={k}")
        pen = 1.0 / (eps - s2)
        u_total = scenario.total_clients * utility(eps, scenario.utility)
    cost = sum(x * c for x, c in zip(k, scenario.costs))
    return u_total - cost + ctx.lam * (pen - _penalty_offset(ctx.eps_req, s2))


# -- grid helpers ------------------------------------------------------------


def grid_size(populations: Sequence[int]) -> int:
    return math.prod(n + 1 for n in populations)


def iter_grid(populations: Sequence[int], chunk: int = CHUNK) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (flat_index, K) blocks covering the grid in lexicographic order."""
    shape = tuple(n + 1 for n in populations)
    total = math.prod(shape)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        yield flat, np.stack(np.unravel_index(flat, shape), axis=1)


def corners(populations: Sequence[int]) -> list[tuple[int, ...]]:
    return list(itertools.product(*[(0, n) for n in populations]))


def _flat_index(k: np.ndarray, populations: Sequence[int]) -> np.ndarray:
    shape = tuple(n + 1 for n in populations)
    return np.ravel_multi_index(tuple(np.asarray(k).T), shape)


def _best(w: np.ndarray, eps: np.ndarray, flat: np.ndarray, mask: np.ndarray) -> int | None:
    """Row of the best masked entry: max w, then min eps, then min flat index."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    order = np.lexsort((flat[idx], eps[idx], -w[idx]))
    return int(idx[order[0]])


def _key(w: float, eps: float, flat: int) -> tuple[float, float, int]:
    return (-w, eps, flat)


def _guard(scenario: Scenario) -> None:
    size = grid_size(scenario.populations)
    if size > ENUM_GUARD:
        raise ValueError(f"grid of {size} states exceeds enumeration guard {ENUM_GUARD}")


def _result(scenario: Scenario, k: Sequence[int], w: float, eps: float, binding: bool, lam: float) -> SolveResult:
    k = tuple(int(x) for x in k)
    state = SocialState.full_dissemination(k, scenario.populations)
    return SolveResult(k, state.buyers, float(w), float(eps), binding, float(lam))


# -- error floor -------------------------------------------------------------


def eps_min(scenario: Scenario) -> float:
    """Smallest error over non-empty coalitions.

    Without high types the error is quasi-concave along every coordinate, so
    the minimum sits at a corner; otherwise the grid is enumerated.
    """
    if scenario.low_heterogeneity:
        ks = np.array([c for c in corners(scenario.populations) if sum(c) > 0])
        return float(errors_of(ks, scenario).min())
    _guard(scenario)
    best = math.inf
    for _, k in iter_grid(scenario.populations):
        best = min(best, float(errors_of(k, scenario).min()))
    return best


def eps_min_bruteforce(scenario: Scenario) -> float:
    _guard(scenario)
    return min(float(errors_of(k, scenario).min()) for _, k in iter_grid(scenario.populations))


def _check_feasible(scenario: Scenario) -> None:
    if math.isinf(scenario.eps_req):
        return
    floor = eps_min(scenario)
    if not feasible(floor, scenario.eps_req):
        raise InfeasibleError(f"eps_req={scenario.eps_req:.6g} is below eps_min={floor:.6g}")


# -- exhaustive oracle -------------------------------------------------------


def solve_bruteforce(scenario: Scenario, lam: float = 0.0) -> SolveResult:
    """Enumerate every K; return the constrained welfare maximiser.

    ``lam`` is only echoed into the result: the oracle never uses it.
    """
    _guard(scenario)
    req = scenario.eps_req
    best = best_free = None
    for flat, k in iter_grid(scenario.populations):
        eps = errors_of(k, scenario)
        w = welfare_of(k, scenario, eps)
        for slot, mask in (("c", feasible(eps, req)), ("u", np.ones_like(eps, dtype=bool))):
            r = _best(w, eps, flat, mask)
            if r is None:
                continue
            cand = (_key(w[r], eps[r], int(flat[r])), tuple(k[r]))
            if slot == "c" and (best is None or cand[0] < best[0]):
                best = cand
            if slot == "u" and (best_free is None or cand[0] < best_free[0]):
                best_free = cand
    if best is None:
        raise InfeasibleError("no state satisfies the error requirement")
    (neg_w, eps, _), k_star = best
    binding = best_free[1] != k_star
    return _result(scenario, k_star, -neg_w, eps, binding, lam)


def welfare_fl_optimum(scenario: Scenario) -> tuple[float, tuple[int, ...]]:
    """Best welfare when only participants get the model, same requirement."""
    _guard(scenario)
    req = scenario.eps_req
    costs = np.asarray(scenario.costs, dtype=float)
    best = None
    for flat, k in iter_grid(scenario.populations):
        eps = errors_of(k, scenario)
        u = scenario.utility.values(eps)
        kf = k.astype(float)
        w = kf.sum(axis=1) * u - kf @ costs
        w[~np.isfinite(eps)] = 0.0
        r = _best(w, eps, flat, feasible(eps, req))
        if r is None:
            continue
        cand = (_key(w[r], eps[r], int(flat[r])), tuple(int(x) for x in k[r]))
        if best is None or cand[0] < best[0]:
            best = cand
    if best is None:
        raise InfeasibleError("no state satisfies the error requirement")
    return -best[0][0], best[1]


# -- structured search -------------------------------------------------------


def _line(k: tuple[int, ...], j: int, n_j: int) -> np.ndarray:
    rows = np.tile(np.asarray(k, dtype=np.int64), (n_j + 1, 1))
    rows[:, j] = np.arange(n_j + 1)
    return rows


def _line_maxima(values: np.ndarray) -> np.ndarray:
    """Positions x with L(x-1) <= L(x) >= L(x+1) (NaN neighbours ignored)."""
    v = np.where(np.isnan(values), -np.inf, values)
    left = np.concatenate(([-np.inf], v[:-1]))
    right = np.concatenate((v[1:], [-np.inf]))
    return np.flatnonzero((left <= v) & (right <= v) | np.isnan(values))


def _edge(ok: np.ndarray) -> np.ndarray:
    """Feasible positions with an infeasible neighbour along the line."""
    left = np.concatenate(([True], ok[:-1]))
    right = np.concatenate((ok[1:], [True]))
    return np.flatnonzero(ok & ~(left & right))


def prop1_candidates(scenario: Scenario, lam: float) -> set[tuple[int, ...]]:
    """All-or-none pattern: corners, plus interior stationary points of high types."""
    pops = scenario.populations
    high = scenario.high_types
    if not high:
        return set(corners(pops))
    out: set[tuple[int, ...]] = set()
    for combo in itertools.product(*[(0, pops[j]) for j in high]):
        base = [0] * scenario.num_types
        for j, v in zip(high, combo):
            base[j] = v
        out.add(tuple(base))
        for j in high:
            rows = _line(tuple(base), j, pops[j])
            vals = lagrangian_of(rows, scenario, lam)
            dl = np.diff(vals)
            for x in range(1, pops[j]):
                if dl[x] <= 0 <= dl[x - 1]:
                    out.add(tuple(int(v) for v in rows[x]))
    return out


def structured_candidates(scenario: Scenario, lam: float) -> set[tuple[int, ...]]:
    pops = scenario.populations
    req = scenario.eps_req
    bounded = not math.isinf(req)
    found: set[tuple[int, ...]] = set()
    frontier = set(corners(pops)) | prop1_candidates(scenario, lam)
    while frontier:
        found |= frontier
        fresh: set[tuple[int, ...]] = set()
        for k in frontier:
            for j, n_j in enumerate(pops):
                rows = _line(k, j, n_j)
                vals = lagrangian_of(rows, scenario, lam)
                picks = set(_line_maxima(vals).tolist())
                if bounded:
                    picks.update(_edge(feasible(errors_of(rows, scenario), req)).tolist())
                fresh.update(tuple(int(v) for v in rows[x]) for x in picks)
            if bounded:
                fresh |= _boundary_walk(k, scenario)
        frontier = fresh - found
    return found


def _boundary_walk(k: tuple[int, ...], scenario: Scenario) -> set[tuple[int, ...]]:
    """Slide along the feasibility frontier in every pair of coordinates."""
    pops = scenario.populations
    out: set[tuple[int, ...]] = set()
    for i, j in itertools.permutations(range(len(pops)), 2):
        xi, xj = np.meshgrid(np.arange(pops[i] + 1), np.arange(pops[j] + 1), indexing="ij")
        rows = np.tile(np.asarray(k, dtype=np.int64), (xi.size, 1))
        rows[:, i] = xi.ravel()
        rows[:, j] = xj.ravel()
        ok = feasible(errors_of(rows, scenario), scenario.eps_req).reshape(xi.shape)
        for x in range(pops[i] + 1):
            for y in _edge(ok[x]):
                out.add(tuple(int(v) for v in rows[x * (pops[j] + 1) + y]))
    return out


def _pick(scenario: Scenario, states: Sequence[tuple[int, ...]], score: str, lam: float = 0.0,
          constrained: bool = True) -> tuple[tuple[int, ...], float, float] | None:
    k = np.array(sorted(states), dtype=np.int64)
    eps = errors_of(k, scenario)
    w = welfare_of(k, scenario, eps) if score == "welfare" else lagrangian_of(k, scenario, lam)
    mask = feasible(eps, scenario.eps_req) if constrained else np.ones(len(k), dtype=bool)
    if score != "welfare":
        mask &= ~np.isnan(w)
    r = _best(w, eps, _flat_index(k, scenario.populations), mask)
    if r is None:
        return None
    return tuple(int(v) for v in k[r]), float(w[r]), float(eps[r])


def solve_structured(scenario: Scenario, lam: float = 0.0) -> SolveResult:
    _check_feasible(scenario)
    cands = structured_candidates(scenario, lam)
    best = _pick(scenario, list(cands), "welfare")
    if best is None:
        raise InfeasibleError("no candidate satisfies the error requirement")
    free = _pick(scenario, list(cands), "welfare", constrained=False)
    k, w, eps = best
    return _result(scenario, k, w, eps, free is not None and free[0] != k, lam)


def lagrangian_argmax(scenario: Scenario, lam: float) -> tuple[tuple[int, ...], float]:
    """Maximiser of the Lagrangian over the all-or-none candidate set, and its error."""
    cands = prop1_candidates(scenario, lam)
    k, _, eps = _pick(scenario, list(cands), "lagrangian", lam=lam, constrained=False)
    return k, eps


# -- multiplier and context --------------------------------------------------


def make_context(scenario: Scenario, lam: float, binding: bool = False,
                 bracket: tuple[float, float] | None = None) -> LagrangianContext:
    """Evaluate L at every state to fix the floor L0 and the corner table."""
    _guard(scenario)
    floor = math.inf
    singular: list[tuple[int, ...]] = []
    below = 0
    s2 = scenario.params.client_variance
    for _, k in iter_grid(scenario.populations):
        vals = lagrangian_of(k, scenario, lam)
        nan = np.isnan(vals)
        if nan.any():
            singular.extend(tuple(int(v) for v in row) for row in k[nan])
        if lam and s2 > 0:
            below += int(np.sum(errors_of(k, scenario) < s2))
        if (~nan).any():
            floor = min(floor, float(vals[~nan].min()))
    if singular:
        log.warning("excluded %d singular states from the Lagrangian domain", len(singular))
    if below:
        log.debug("%d states have eps < sigma^2; penalty kept with its raw sign", below)
    table = {}
    for c in corners(scenario.populations):
        v = float(lagrangian_of(np.array([c]), scenario, lam)[0])
        if math.isnan(v):
            raise SingularityError(f"corner {c} is singular")
        table[c] = v
    return LagrangianContext(
        lam=float(lam),
        eps_req=scenario.eps_req,
        L_floor=floor,
        corner_values=table,
        singular_states=tuple(singular),
        binding=binding,
        bracket=bracket if bracket is not None else (float(lam), float(lam)),
    )


def find_lambda(scenario: Scenario, iterations: int = 60, max_doublings: int = 64) -> LagrangianContext:
    """Smallest multiplier whose Lagrangian maximiser meets the requirement."""
    _check_feasible(scenario)
    req = scenario.eps_req
    if math.isinf(req):
        return make_context(scenario, 0.0)

    def ok(lam: float) -> bool:
        _, eps = lagrangian_argmax(scenario, lam)
        return bool(feasible(eps, req))

    if ok(0.0):
        return make_context(scenario, 0.0)
    lo, hi = 0.0, 1.0
    for _ in range(max_doublings):
        if ok(hi):
            break
        lo, hi = hi, hi * 2.0
    else:
        log.warning("no multiplier up to %.3g meets eps_req; relying on direct search", hi)
        return make_context(scenario, hi, binding=True, bracket=(lo, hi))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return make_context(scenario, hi, binding=True, bracket=(lo, hi))


def solve(scenario: Scenario) -> tuple[SolveResult, LagrangianContext]:
    """Multiplier search followed by the structured solve."""
    ctx = find_lambda(scenario)
    res = solve_structured(scenario, ctx.lam)
    return res, ctx


# -- multilinear interpolation -----------------------------------------------


def theta(state: SocialState | Sequence[float], ctx: LagrangianContext, scenario: Scenario) -> float:
    """Multilinear interpolation of L from the all-or-none corners."""
    k = state.participants if isinstance(state, SocialState) else tuple(state)
    pops = scenario.populations
    total = 0.0
    for x, value in ctx.corner_values.items():
        weight = 1.0
        for ki, xi, ni in zip(k, x, pops):
            weight *= ((2 * ki - ni) * xi + (ni - ki) * ni) / ni**2
        total += value * weight
    return total


# -- alignment conditions ----------------------------------------------------


def _utility_slope(scenario: Scenario, eps: float, d_eps: float) -> float:
    return scenario.utility.derivative(eps) * d_eps


def check_alignment(scenario: Scenario, max_coalitions: int = 200_000, seed: int = 0) -> AlignmentReport:
    """Test the sufficient conditions under which welfare maximisation
    and error minimisation pick the same state."""
    pops = scenario.populations
    n_total = scenario.total_clients
    p = scenario.params
    s2, scale = p.client_variance, p.scale
    n_types = scenario.num_types
    witnesses: list[tuple[tuple[int, ...], int]] = []
    psi_min = [math.inf] * n_types
    sampled = False

    if scenario.low_heterogeneity:
        for r in range(1, n_types):
            for subset in itertools.combinations(range(n_types), r):
                k_vec = tuple(pops[i] if i in subset else 0 for i in range(n_types))
                k = sum(k_vec)
                eps_j = generalization_error(k_vec, scenario)
                for i in range(n_types):
                    if i in subset:
                        continue
                    n_i, c_i, d_i = pops[i], scenario.costs[i], scenario.data_sizes[i]
                    psi = scale * n_i / d_i + n_i * (n_i + 2 * k - 1) * s2 - (2 * k * n_i + 1) * eps_j
                    psi_min[i] = min(psi_min[i], psi)
                    if psi < 0:
                        continue
                    num = (k + n_i) ** 2 * n_i * c_i / n_total
                    slope = _utility_slope(scenario, eps_j, error_partial(k_vec, scenario, i))
                    if not _ratio_at_most(num, slope, psi):
                        witnesses.append((k_vec, i))
    else:
        size = grid_size(pops) - 1
        if size > max_coalitions:
            sampled = True
            rng = random.Random(seed)
            coalitions = set()
            while len(coalitions) < max_coalitions:
                c = tuple(rng.randint(0, n) for n in pops)
                if sum(c):
                    coalitions.add(c)
            states = sorted(coalitions)
        else:
            states = [c for c in itertools.product(*[range(n + 1) for n in pops]) if sum(c)]
        for k_vec in states:
            k = sum(k_vec)
            eps_k = generalization_error(k_vec, scenario)
            for i in range(n_types):
                d_i, c_i = scenario.data_sizes[i], scenario.costs[i]
                psi = scale / d_i + 2 * k * s2 - (2 * k + 1) * eps_k
                psi_min[i] = min(psi_min[i], psi)
                if psi < 0:
                    continue
                arg = scale / d_i + 2 * k * (s2 - eps_k)
                if not arg > 0:
                    witnesses.append((k_vec, i))
                    continue
                d_arg = 2 * (s2 - eps_k) - 2 * k * error_partial(k_vec, scenario, i)
                slope = _utility_slope(scenario, arg, d_arg)
                num = (k + 1) ** 2 * c_i / n_total
                if not _ratio_at_most(num, slope, psi):
                    witnesses.append((k_vec, i))
    return AlignmentReport(
        holds=not witnesses,
        psi=tuple(psi_min),
        failing_witnesses=tuple(witnesses),
        sampled=sampled,
    )


def _ratio_at_most(num: float, den: float, bound: float) -> bool:
    """num/den <= bound without dividing by zero."""
    if den == 0:
        return num == 0
    return num / den <= bound
