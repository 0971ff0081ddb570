"""Parameter sweeps: solve, quote and equilibrate each grid point, emit CSV rows."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from swanmech.config import SweepSpec
from swanmech.economy import Strategy, StrategyProfile
from swanmech.game import EquilibriumResult, best_response_dynamics
from swanmech.mechanism import MechanismQuote, modified_fl_quote, swan_quote, zero_quote
from swanmech.model import Scenario, generalization_error
from swanmech.optimizer import (
    InfeasibleError,
    LagrangianContext,
    SolveResult,
    solve,
    welfare_fl_optimum,
)

SIG_DIGITS = 12


def fmt(x) -> str:
    """Render a number with 12 significant digits; blanks for None."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = f"{x:.{SIG_DIGITS}g}"
    return "0" if out == "-0" else out


def num(x):
    """JSON-friendly number rounded to 12 significant digits (inf/nan as strings)."""
    if x is None or isinstance(x, (bool, int)):
        return x
    x = float(x)
    if not math.isfinite(x):
        return fmt(x)
    return float(fmt(x))


def build_quote(
    name: str, scenario: Scenario, result: SolveResult, ctx: LagrangianContext, fl_reward: float
) -> MechanismQuote:
    if name == "swan":
        return swan_quote(scenario, result, ctx)
    if name == "modified_fl":
        return modified_fl_quote(scenario, fl_reward)
    if name == "zero":
        return zero_quote()
    raise ValueError(f"unknown mechanism {name!r}")


def run_equilibrium(
    scenario: Scenario, quote: MechanismQuote, seed: int, max_rounds: int = 1000, record_trace: bool = False
) -> EquilibriumResult:
    start = StrategyProfile.uniform(scenario.populations, Strategy.ABSTAIN)
    return best_response_dynamics(
        scenario, quote, start, max_rounds=max_rounds, rng_seed=seed, record_trace=record_trace
    )


def point_scenario(base: Scenario, variable: str, value: float) -> Scenario:
    if variable == "unit_cost":
        return base.with_costs([value * d for d in base.data_sizes])
    if variable == "eps_req":
        return base.with_eps_req(value)
    raise ValueError(f"unknown sweep variable {variable!r}")


@dataclass(frozen=True)
class SweepTask:
    scenario: Scenario
    variable: str
    value: float
    mechanisms: tuple[str, ...]
    seeds: tuple[int, ...]
    fl_reward: float


def columns(num_types: int) -> list[str]:
    head = ["variable", "value", "mechanism", "welfare_mots", "welfare_fl_optimum", "platform_cost", "eps_star"]
    head += [f"k_star_{i + 1}" for i in range(num_types)]
    head += ["nash_verified", "seed", "status", "welfare_mots_optimum", "eps_eq", "reached_kstar", "converged"]
    head += [f"k_eq_{i + 1}" for i in range(num_types)]
    head += [f"b_eq_{i + 1}" for i in range(num_types)]
    return head


def evaluate_point(task: SweepTask) -> list[dict]:
    """Rows for one grid value: every mechanism x seed."""
    m = task.scenario.num_types
    base = {"variable": task.variable, "value": task.value}
    try:
        sc = point_scenario(task.scenario, task.variable, task.value)
        result, ctx = solve(sc)
        w_fl, _ = welfare_fl_optimum(sc)
    except InfeasibleError:
        return [
            {**base, "mechanism": mech, "seed": seed, "status": "infeasible"}
            for mech in task.mechanisms
            for seed in task.seeds
        ]
    common = {
        **base,
        "welfare_fl_optimum": w_fl,
        "welfare_mots_optimum": result.w_star,
        "eps_star": result.eps_star,
        **{f"k_star_{i + 1}": result.k_star[i] for i in range(m)},
    }
    rows = []
    for mech in task.mechanisms:
        for seed in task.seeds:
            row = {**common, "mechanism": mech, "seed": seed}
            try:
                quote = build_quote(mech, sc, result, ctx, task.fl_reward)
                eq = run_equilibrium(sc, quote, seed)
            except (ArithmeticError, ValueError) as exc:
                row["status"] = f"error:{type(exc).__name__}"
                rows.append(row)
                continue
            st = eq.state
            row.update(
                welfare_mots=eq.welfare.w_mots,
                platform_cost=eq.welfare.platform_cost,
                nash_verified=eq.nash_verified,
                converged=eq.converged,
                eps_eq=generalization_error(st, sc),
                reached_kstar=st.participants == result.k_star,
                status="ok" if eq.converged else "nonconverged",
                **{f"k_eq_{i + 1}": st.participants[i] for i in range(m)},
                **{f"b_eq_{i + 1}": st.buyers[i] for i in range(m)},
            )
            rows.append(row)
    return rows


def worker_count(n_tasks: int, env: Optional[str] = None) -> int:
    cap = env if env is not None else os.environ.get("SWANMECH_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def run_sweep(scenario: Scenario, spec: SweepSpec, fl_reward: float, workers: Optional[int] = None) -> list[dict]:
    tasks = [
        SweepTask(scenario, spec.variable, float(v), spec.mechanisms, spec.seeds, fl_reward)
        for v in spec.grid
    ]
    n = workers if workers is not None else worker_count(len(tasks))
    if n <= 1:
        chunks = [evaluate_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            chunks = list(pool.map(evaluate_point, tasks))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["value"], r["mechanism"], r["seed"]))
    return rows


def render_csv(rows: Sequence[dict], num_types: int) -> str:
    buf = io.StringIO()
    cols = columns(num_types)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if isinstance(r.get(c), str) else fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def write_atomic(text: str, path: str | Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
