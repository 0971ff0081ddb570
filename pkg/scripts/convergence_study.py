"""How often SWAN best responses from all-abstain land on the welfare optimum.

Compares the library dynamics (buying needs at least one other trainer)
with a relaxed variant where a lone trainer may switch to buying. The
relaxed variant works directly on the shares tau * (Theta - L0), so it
is only a diagnostic and not part of the package.

    python3 scripts/convergence_study.py --seed 1 --count 200
"""

from __future__ import annotations

import argparse
import collections
import logging
import random
import warnings

from swanmech.economy import StrategyProfile
from swanmech.game import verify_nash
from swanmech.mechanism import swan_quote
from swanmech.optimizer import lagrangian, solve, theta
from swanmech.scenarios import random_scenarios
from swanmech.sweep import run_equilibrium


def relaxed_dynamics(sc, ctx, seed: int, max_rounds: int = 1000) -> tuple[int, ...]:
    low = sc.low_heterogeneity

    def share(k):
        return (theta(k, ctx, sc) if low else lagrangian(k, ctx, sc)) - ctx.L_floor

    types = [i for i, n in enumerate(sc.populations) for _ in range(n)]
    strat = ["A"] * len(types)
    k = [0] * sc.num_types
    rng = random.Random(seed)
    order = list(range(len(types)))
    for _ in range(max_rounds):
        rng.shuffle(order)
        moved = False
        for c in order:
            t = types[c]
            without = list(k)
            if strat[c] == "J":
                without[t] -= 1
            joined = list(without)
            joined[t] += 1
            opts = {"J": share(joined), "B": share(without), "A": 0.0}
            best = max(opts.values())
            if opts[strat[c]] >= best - 1e-12:
                continue
            new = next(s for s in "JBA" if opts[s] >= best - 1e-12)
            k = joined if new == "J" else without
            strat[c] = new
            moved = True
        if not moved:
            break
    return tuple(k)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--show", type=int, default=10, help="misses to print")
    args = ap.parse_args()
    logging.disable(logging.WARNING)
    warnings.simplefilter("ignore")

    tally = collections.Counter()
    shown = 0
    for i, sc in enumerate(random_scenarios(args.seed, args.count)):
        res, ctx = solve(sc)
        if res.w_star <= 0:
            continue
        branch = "low" if sc.low_heterogeneity else "high"
        tally[f"{branch}:total"] += 1
        quote = swan_quote(sc, res, ctx)
        at_opt = StrategyProfile.from_state(res.state, sc.populations)
        tally[f"{branch}:kstar_nash"] += verify_nash(sc, quote, at_opt).verified
        eq = run_equilibrium(sc, quote, seed=i)
        hit = eq.state.participants == res.k_star
        tally[f"{branch}:library"] += hit
        if not hit and sum(eq.state.participants) == 1:
            tally[f"{branch}:lone_trainer_miss"] += 1
        relaxed = relaxed_dynamics(sc, ctx, seed=i)
        tally[f"{branch}:relaxed"] += relaxed == res.k_star
        if not hit and shown < args.show:
            shown += 1
            print(f"case {i:3d} {branch:4s} K*={res.k_star} library={eq.state.participants} relaxed={relaxed}")
    print()
    print(f"{'branch':6s} {'scenarios':>9s} {'K*-is-NE':>8s} {'library':>8s} {'lone-trap':>9s} {'relaxed':>8s}")
    for b in ("low", "high"):
        n = tally[f"{b}:total"]
        print(f"{b:6s} {n:9d} {tally[f'{b}:kstar_nash']:8d} {tally[f'{b}:library']:8d} {tally[f'{b}:lone_trainer_miss']:9d} {tally[f'{b}:relaxed']:8d}")


if __name__ == "__main__":
    main()
