"""Scenario files.

A scenario file is YAML with these sections (only ``scenario.n``,
``scenario.algorithm`` and ``utility`` are required)::

    scenario:
      name: daimd_n50          # default "scenario"
      n: 50
      algorithm: daimd         # aimd | daimd | paimd | qaimd
      horizon: 10000
      seed: 0                  # run seed (agent random streams)
      population_seed: null    # defaults to seed
      capacity: null           # absolute C; overrides capacity_ratio
      capacity_ratio: 0.35     # C = ratio * sum(chi) or ratio * sum(psi)
      price: 0.0               # L
      x0: null                 # 0, or alpha under qaimd
    utility:
      family: log              # log | sigmoid
      eta: [0.0, 1.0]          # uniform range
      chi: [40.0, 60.0]        # log family
      psi: [25.0, 100.0]       # sigmoid family
      users: null              # explicit [[eta, chi_or_psi], ...]
    params:
      alpha: 1.0
      beta: 0.85
      gamma: null              # null = calibrated
      gamma1: null
      gamma2: null
      lambda_floor: 0.001
      lambda_ceil: 0.999
      daimd_semantics: as-written   # or expectation
    game:
      p: 1
      tol: 1.0e-8
      damping: 0.5
      max_iters: 10000
    sweep:
      axis: null               # L | C_ratio | n | seed
      values: []
      workers: null
    output:
      out_dir: out
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .agents import AimdParams
from .engine import SWEEP_AXES, ConfigError, ScenarioConfig, UtilitySpec

__all__ = ["GameSettings", "SweepSettings", "RunConfig", "load_config", "parse_config", "DEFAULTS"]

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "scenario": {
        "name": "scenario", "n": None, "algorithm": None, "horizon": 10_000, "seed": 0,
        "population_seed": None, "capacity": None, "capacity_ratio": 0.35, "price": 0.0, "x0": None,
    },
    "utility": {"family": None, "eta": None, "chi": None, "psi": None, "users": None},
    "params": {f.name: f.default for f in dataclasses.fields(AimdParams)},
    "game": {"p": 1, "tol": 1e-8, "damping": 0.5, "max_iters": 10_000},
    "sweep": {"axis": None, "values": [], "workers": None},
    "output": {"out_dir": "out"},
}
REQUIRED = (("scenario", "n"), ("scenario", "algorithm"), ("utility", "family"))


@dataclass(frozen=True)
class GameSettings:
    p: int = 1
    tol: float = 1e-8
    damping: float = 0.5
    max_iters: int = 10_000


@dataclass(frozen=True)
class SweepSettings:
    axis: Optional[str] = None
    values: Tuple[float, ...] = ()
    workers: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    game: GameSettings = field(default_factory=GameSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    out_dir: str = "out"


class _Locator:
    """Maps dotted field paths to source lines of the composed YAML tree."""

    def __init__(self, node):
        self.node = node

    def line(self, path: str) -> Optional[int]:
        node, best = self.node, None
        for part in path.split("."):
            if not isinstance(node, yaml.MappingNode):
                break
            for key, value in node.value:
                if key.value == part:
                    best = key.start_mark.line + 1
                    node = value
                    break
            else:
                break
        return best


def _fail(loc: _Locator, field_path: str, message: str):
    line = loc.line(field_path)
    where = f" (line {line})" if line else ""
    raise ConfigError(field_path, f"{message}{where}")


def _number(loc, path, value, kind=float, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(loc, path, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            _fail(loc, path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate scenario YAML. Errors are ConfigError naming the field and line."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        ctx, ctx_mark = getattr(exc, "context", None), getattr(exc, "context_mark", None)
        if ctx and ctx_mark:
            problem += f" ({ctx} at line {ctx_mark.line + 1})"
        raise ConfigError("<parse>", f"{source}: YAML syntax error{where}: {problem}") from None
    loc = _Locator(node)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", f"{source}: expected a mapping of sections")
    merged: Dict[str, Dict[str, Any]] = {}
    for section, defaults in DEFAULTS.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            _fail(loc, section, "expected a mapping")
        for key in given:
            if key not in defaults:
                _fail(loc, f"{section}.{key}", f"unknown field; allowed: {', '.join(defaults)}")
        merged[section] = {**defaults, **given}
    for section in raw:
        if section not in DEFAULTS:
            _fail(loc, section, f"unknown section; allowed: {', '.join(DEFAULTS)}")
    for section, key in REQUIRED:
        if merged[section][key] is None:
            _fail(loc, f"{section}.{key}", "required field missing")

    s, u, p, g, sw = (merged[k] for k in ("scenario", "utility", "params", "game", "sweep"))
    for key in ("alpha", "beta", "gamma", "gamma1", "gamma2", "lambda_floor", "lambda_ceil"):
        p[key] = _number(loc, f"params.{key}", p[key], allow_none=key.startswith("gamma"))
    try:
        params = AimdParams(**p)
    except ValueError as exc:
        name = str(exc).split()[0]
        _fail(loc, f"params.{name if name in p else 'lambda_floor'}", str(exc))

    try:
        utility = UtilitySpec(**u)
    except ConfigError as exc:
        _fail(loc, exc.field, str(exc).split(": ", 1)[1])
    except (TypeError, ValueError) as exc:
        _fail(loc, "utility", str(exc))

    scen = dict(s)
    scen["n"] = _number(loc, "scenario.n", s["n"], int)
    scen["horizon"] = _number(loc, "scenario.horizon", s["horizon"], int)
    scen["seed"] = _number(loc, "scenario.seed", s["seed"], int)
    scen["population_seed"] = _number(loc, "scenario.population_seed", s["population_seed"], int, True)
    for key in ("capacity", "x0"):
        scen[key] = _number(loc, f"scenario.{key}", s[key], allow_none=True)
    for key in ("capacity_ratio", "price"):
        scen[key] = _number(loc, f"scenario.{key}", s[key])
    scen["name"] = str(s["name"])
    try:
        scenario = ScenarioConfig(utility=utility, params=params, **scen)
    except ConfigError as exc:
        _fail(loc, f"scenario.{exc.field}", str(exc).split(": ", 1)[1])

    game = GameSettings(
        p=_number(loc, "game.p", g["p"], int),
        tol=_number(loc, "game.tol", g["tol"]),
        damping=_number(loc, "game.damping", g["damping"]),
        max_iters=_number(loc, "game.max_iters", g["max_iters"], int),
    )
    if game.p < 1:
        _fail(loc, "game.p", "must be >= 1")
    if not game.tol > 0:
        _fail(loc, "game.tol", "must be > 0")
    if not 0 < game.damping <= 1:
        _fail(loc, "game.damping", "must lie in (0, 1]")
    if game.max_iters < 1:
        _fail(loc, "game.max_iters", "must be >= 1")

    if sw["axis"] is not None and sw["axis"] not in SWEEP_AXES:
        _fail(loc, "sweep.axis", f"must be one of {', '.join(SWEEP_AXES)}")
    values = sw["values"] or []
    if not isinstance(values, list):
        _fail(loc, "sweep.values", "expected a list")
    sweep = SweepSettings(
        axis=sw["axis"],
        values=tuple(_number(loc, "sweep.values", v) for v in values),
        workers=_number(loc, "sweep.workers", sw["workers"], int, True),
    )
    return RunConfig(scenario=scenario, game=game, sweep=sweep, out_dir=str(merged["output"]["out_dir"]))


def load_config(path) -> RunConfig:
    """Read a scenario file; OSError propagates for missing or unreadable files."""
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def help_defaults() -> List[str]:
    """One ``section.key = default`` line per optional field, for ``--help``."""
    lines = []
    for section, fields in DEFAULTS.items():
        for key, value in fields.items():
            if (section, key) in REQUIRED or (section == "utility" and value is None):
                continue
            lines.append(f"  {section}.{key} = {value!r}")
    return lines
