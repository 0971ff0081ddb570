"""Command-line entry point: solve | equilibrium | sweep | regions | oracle."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict
from typing import Optional, Sequence

from swanmech.config import MECHANISMS, SWEEP_VARIABLES, ConfigError, SweepSpec, load_config, parse_real
from swanmech.economy import welfare_fl
from swanmech.game import write_trace
from swanmech.mechanism import quote_dump
from swanmech.model import SocialState, classify_region, eta_threshold, generalization_error, network_effect
from swanmech.optimizer import (
    InfeasibleError,
    eps_min,
    errors_of,
    grid_size,
    iter_grid,
    solve,
    solve_bruteforce,
    welfare_fl_optimum,
    welfare_of,
)
from swanmech.sweep import build_quote, fmt, num, render_csv, run_equilibrium, run_sweep, write_atomic

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3

# Instances up to this many states are re-solved by enumeration as a cross-check.
CROSSCHECK_LIMIT = 200_000


def _emit(doc: dict, out: Optional[str]) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        write_atomic(text, out)
    else:
        sys.stdout.write(text)


def _solve_doc(res, floor: float) -> dict:
    return {
        "k_star": list(res.k_star),
        "b_star": list(res.b_star),
        "w_star": num(res.w_star),
        "eps_star": num(res.eps_star),
        "eps_min": num(floor),
        "binding": res.binding,
        "lambda_star": num(res.lambda_star),
    }


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    res, ctx = solve(sc)
    doc = {"config": cfg.name, **_solve_doc(res, eps_min(sc)), "eps_req": num(sc.eps_req)}
    doc["welfare_fl_optimum"] = num(welfare_fl_optimum(sc)[0])
    if grid_size(sc.populations) <= CROSSCHECK_LIMIT:
        ref = solve_bruteforce(sc)
        doc["bruteforce_k_star"] = list(ref.k_star)
        doc["bruteforce_match"] = ref.k_star == res.k_star
    _emit(doc, args.out)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    res, ctx = solve(sc)
    quote = build_quote(args.mechanism, sc, res, ctx, cfg.modified_fl_reward)
    eq = run_equilibrium(sc, quote, args.seed, max_rounds=args.max_rounds, record_trace=args.trace)
    st = eq.state
    doc = {
        "config": cfg.name,
        "mechanism": args.mechanism,
        "seed": args.seed,
        "converged": eq.converged,
        "rounds": eq.rounds,
        "nash_verified": eq.nash_verified,
        "deviations_checked": eq.deviations_checked,
        "participants": list(st.participants),
        "buyers": list(st.buyers),
        "eps": num(generalization_error(st, sc)),
        "welfare_mots": num(eq.welfare.w_mots),
        "welfare_fl": num(eq.welfare.w_fl),
        "platform_cost": num(eq.welfare.platform_cost),
        "client_payoffs": [num(x) for x in eq.welfare.client_payoffs],
        "k_star": list(res.k_star),
        "w_star": num(res.w_star),
        "reached_kstar": st.participants == res.k_star,
        "witness": None if eq.witness is None else {
            k: (v.value if hasattr(v, "value") else num(v)) for k, v in asdict(eq.witness).items()
        },
    }
    if args.mechanism == "swan":
        doc["quote"] = {k: (num(v) if not isinstance(v, (str, list, type(None))) else v)
                        for k, v in quote_dump(quote, res).items()}
        doc["quote"]["rewards_at_kstar"] = [num(x) for x in doc["quote"]["rewards_at_kstar"]]
    if args.trace:
        write_trace(eq.trace, args.trace_out)
        doc["trace"] = args.trace_out
    _emit(doc, args.out)
    return EXIT_OK if eq.converged else EXIT_NONCONVERGED


def _sweep_spec(args, cfg) -> SweepSpec:
    base = cfg.sweep
    if args.variable is None and base is None:
        raise ConfigError("no sweep: give --variable/--grid or a 'sweep' section in the config")
    variable = args.variable or base.variable
    grid = tuple(parse_real(v) for v in args.grid.split(",")) if args.grid else (base.grid if base else ())
    mechs = tuple(args.mechanisms.split(",")) if args.mechanisms else (base.mechanisms if base else MECHANISMS)
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (base.seeds if base else (args.seed,))
    return SweepSpec(variable, grid, mechs, seeds)


def cmd_sweep(args) -> int:
    # Grid points below the error floor become "infeasible" rows, not a load error.
    cfg = load_config(args.config, check_requirement=False)
    spec = _sweep_spec(args, cfg)
    rows = run_sweep(cfg.scenario, spec, cfg.modified_fl_reward)
    text = render_csv(rows, cfg.scenario.num_types)
    if args.out:
        write_atomic(text, args.out)
    else:
        sys.stdout.write(text)
    bad = [r for r in rows if r.get("status") == "nonconverged"]
    return EXIT_NONCONVERGED if bad else EXIT_OK


def cmd_regions(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    if args.state:
        k = tuple(int(x) for x in args.state.split(","))
        if len(k) != sc.num_types:
            raise ConfigError(f"--state needs {sc.num_types} counts")
    else:
        k = solve(sc)[0].k_star
    if sum(k) == 0:
        warnings.warn("empty coalition; reporting at one participant of the largest type", stacklevel=1)
        k = tuple(1 if i == sc.num_types - 1 else 0 for i in range(sc.num_types))
    reports = [classify_region(k, sc, j) for j in range(sc.num_types)]
    doc = {
        "config": cfg.name,
        "state": list(k),
        "eta": num(eta_threshold(k, sc)),
        "hetero_point": num(sc.params.hetero_point),
        "types": [
            {"type": r.type_index + 1, "region": r.region, "inv_d": num(r.inv_d)} for r in reports
        ],
    }
    if args.scan:
        scan = []
        for j, t in enumerate(sc.types):
            for kj in range(t.population):
                kk = list(k)
                kk[j] = kj
                if sum(kk) == 0:
                    continue
                st = SocialState(tuple(kk))
                scan.append({"type": j + 1, "k_j": kj, "eps": num(generalization_error(st, sc)),
                             "network_effect": num(network_effect(st, sc, j))})
        doc["scan"] = scan
    _emit(doc, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    res = solve_bruteforce(sc)
    doc = {"config": cfg.name, **_solve_doc(res, eps_min(sc)), "states": grid_size(sc.populations)}
    if args.out:
        lines = [",".join([f"k_{i + 1}" for i in range(sc.num_types)] + ["eps", "welfare_mots", "welfare_fl"])]
        for _, k in iter_grid(sc.populations):
            eps = errors_of(k, sc)
            w = welfare_of(k, sc, eps)
            for row, e, wm in zip(k, eps, w):
                st = SocialState(tuple(int(x) for x in row))
                lines.append(",".join([str(int(x)) for x in row] + [fmt(e), fmt(wm), fmt(welfare_fl(st, sc))]))
        write_atomic("\n".join(lines) + "\n", args.out)
        doc["dump"] = args.out
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swanmech", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario YAML/JSON file")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        return sp

    common(sub.add_parser("solve", help="constrained welfare optimum")).set_defaults(fn=cmd_solve)

    eq = common(sub.add_parser("equilibrium", help="best-response dynamics from all-abstain"))
    eq.add_argument("--mechanism", choices=MECHANISMS, default="swan")
    eq.add_argument("--seed", type=int, default=0)
    eq.add_argument("--max-rounds", type=int, default=1000)
    eq.add_argument("--trace", action="store_true", help="record per-move trace CSV")
    eq.add_argument("--trace-out", default="trace.csv")
    eq.set_defaults(fn=cmd_equilibrium)

    sw = common(sub.add_parser("sweep", help="grid sweep to CSV"))
    sw.add_argument("--variable", choices=SWEEP_VARIABLES)
    sw.add_argument("--grid", help="comma-separated values")
    sw.add_argument("--mechanisms", help="comma-separated subset of " + ",".join(MECHANISMS))
    sw.add_argument("--seeds", help="comma-separated integers")
    sw.add_argument("--seed", type=int, default=0)
    sw.set_defaults(fn=cmd_sweep)

    rg = common(sub.add_parser("regions", help="network-effect regions per type"))
    rg.add_argument("--state", help="comma-separated participant counts (default: optimum)")
    rg.add_argument("--scan", action="store_true", help="include a per-type K_j scan")
    rg.set_defaults(fn=cmd_regions)

    common(sub.add_parser("oracle", help="exhaustive enumeration dump")).set_defaults(fn=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
