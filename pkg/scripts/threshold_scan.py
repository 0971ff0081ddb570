"""Two-type error scan under iid data: where does adding small-data clients start to help?

Prints eps(K_1) for K_1 = 0..horizon (exact rationals, unit d*gamma^2)
next to the closed-form threshold.

    python3 scripts/threshold_scan.py 50 300 5
"""

from __future__ import annotations

import argparse
from fractions import Fraction

from swanmech.model import example1_threshold


def scan(d1: int, d2: int, k2: int, horizon: int) -> list[Fraction]:
    return [Fraction(k1 * d2 + k2 * d1, d1 * d2 * (k1 + k2) ** 2) for k1 in range(horizon + 1)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("d1", type=int)
    ap.add_argument("d2", type=int)
    ap.add_argument("k2", type=int)
    ap.add_argument("--horizon", type=int, default=12)
    args = ap.parse_args()
    eps = scan(args.d1, args.d2, args.k2, args.horizon)
    t = example1_threshold(args.d1, args.d2, args.k2)
    peak = max(range(len(eps)), key=lambda i: (eps[i], -i))
    print(f"threshold={t} argmax={peak}")
    print("k1,eps,step")
    for k1, e in enumerate(eps):
        step = "" if k1 == 0 else ("down" if e < eps[k1 - 1] else "up" if e > eps[k1 - 1] else "flat")
        print(f"{k1},{float(e):.10g},{step}")


if __name__ == "__main__":
    main()
