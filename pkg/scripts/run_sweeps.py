"""Unit-cost and requirement sweeps for every bundled config, written to results/.

    python3 scripts/run_sweeps.py [--out results]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from swanmech.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent

# The configs' own sweep sections cover unit cost (mnist, svhn) or eps_req
# (cifar10); the second study per config is given here.
EXTRA = {
    "mnist": ("eps_req", "1.15,1.2,1.3,1.5,2,3,inf"),
    "svhn": ("eps_req", "1.15,1.2,1.3,1.5,2,inf"),
    "cifar10": ("unit_cost", "0.0002,0.0005,0.001,0.002,0.005"),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (var, grid) in EXTRA.items():
        cfg = str(ROOT / "configs" / f"{name}.yaml")
        for tag, extra in (("config", []), (var, ["--variable", var, "--grid", grid])):
            path = out / f"{name}_{tag}.csv"
            code = cli(["sweep", "--config", cfg, "--out", str(path), *extra])
            print(f"{path} exit={code}")


if __name__ == "__main__":
    main()
