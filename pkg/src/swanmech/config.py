"""Scenario and sweep configuration files (YAML; JSON is accepted too)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import yaml

from swanmech.economy import UtilityFunction, check_curvature
from swanmech.model import ClientType, HeterogeneityParams, Scenario
from swanmech.optimizer import InfeasibleError, eps_min, feasible

MECHANISMS = ("swan", "modified_fl", "zero")
SWEEP_VARIABLES = ("unit_cost", "eps_req")

_number_or_inf = {"oneOf": [{"type": "number"}, {"type": "string", "enum": ["inf", "+inf", "Infinity"]}]}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["types", "feature_dim", "data_variance", "utility"],
    "properties": {
        "name": {"type": "string"},
        "types": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["data_size", "population"],
                "properties": {
                    "data_size": {"type": "integer", "minimum": 1},
                    "cost": {"type": "number", "minimum": 0},
                    "population": {"type": "integer", "minimum": 1},
                },
                "additionalProperties": False,
            },
        },
        "unit_cost": {"type": "number", "minimum": 0},
        "feature_dim": {"type": "integer", "minimum": 1},
        "data_variance": {"type": "number", "exclusiveMinimum": 0},
        "client_variance": {"type": "number", "minimum": 0},
        "utility": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["power", "table"]},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "exponent": {"type": "number", "exclusiveMinimum": 0},
                "table": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                },
            },
            "additionalProperties": False,
        },
        "eps_req": _number_or_inf,
        "benchmark": {
            "type": "object",
            "properties": {"modified_fl_reward": {"type": "number"}},
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "required": ["variable", "grid"],
            "properties": {
                "variable": {"enum": list(SWEEP_VARIABLES)},
                "grid": {"type": "array", "minItems": 1, "items": _number_or_inf},
                "mechanisms": {"type": "array", "items": {"enum": list(MECHANISMS)}},
                "seeds": {"type": "array", "items": {"type": "integer"}},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple[float, ...]
    mechanisms: tuple[str, ...] = ("swan", "modified_fl", "zero")
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}")
        if not self.grid:
            raise ConfigError("sweep grid must be non-empty")
        bad = [m for m in self.mechanisms if m not in MECHANISMS]
        if bad:
            raise ConfigError(f"unknown mechanisms: {bad}")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    scenario: Scenario
    modified_fl_reward: float
    sweep: Optional[SweepSpec] = None
    raw: dict = field(default_factory=dict, repr=False)


def parse_real(value: Any) -> float:
    if isinstance(value, str):
        if value.strip().lstrip("+").lower() in ("inf", "infinity"):
            return math.inf
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"not a number: {value!r}") from None
    return float(value)


def build_scenario(doc: dict) -> Scenario:
    unit = doc.get("unit_cost")
    rows = []
    for t in doc["types"]:
        if "cost" in t:
            cost = float(t["cost"])
        elif unit is not None:
            cost = float(unit) * t["data_size"]
        else:
            raise ConfigError("each type needs a cost unless unit_cost is given")
        rows.append((t["data_size"], cost, t["population"]))
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    if ordered != rows:
        warnings.warn("client types re-sorted by (data_size, cost)", stacklevel=2)
    types = tuple(ClientType(i + 1, d, c, n) for i, (d, c, n) in enumerate(ordered))
    u = doc["utility"]
    utility = UtilityFunction(
        kind=u["kind"],
        scale=float(u.get("scale", 40.0)),
        exponent=float(u.get("exponent", 16.0)),
        table=tuple(tuple(p) for p in u.get("table", ())),
    )
    params = HeterogeneityParams(
        int(doc["feature_dim"]), float(doc["data_variance"]), float(doc.get("client_variance", 0.0))
    )
    return Scenario(types, params, utility, parse_real(doc.get("eps_req", "inf")))


def validate_requirement(scenario: Scenario, curvature: bool = True) -> float:
    """Reject eps_req below the error floor; warn on utility curvature. Returns eps_min."""
    floor = eps_min(scenario)
    if not feasible(floor, scenario.eps_req):
        raise InfeasibleError(f"eps_req={scenario.eps_req:.6g} below eps_min={floor:.6g}")
    if curvature:
        check_curvature(scenario, floor)
    return floor


def load_config(path: str | Path, check_requirement: bool = True) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.message}") from exc
    try:
        scenario = build_scenario(doc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if check_requirement:
        validate_requirement(scenario)
    sweep = None
    if "sweep" in doc:
        s = doc["sweep"]
        sweep = SweepSpec(
            variable=s["variable"],
            grid=tuple(parse_real(v) for v in s["grid"]),
            mechanisms=tuple(s.get("mechanisms", MECHANISMS)),
            seeds=tuple(s.get("seeds", (0,))),
        )
    reward = doc.get("benchmark", {}).get("modified_fl_reward", scenario.costs[0])
    return ScenarioConfig(
        name=doc.get("name", Path(path).stem),
        scenario=scenario,
        modified_fl_reward=float(reward),
        sweep=sweep,
        raw=doc,
    )
