"""Command-line front end: ``aimdalloc {run,sweep,baseline,nash}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 Nash
iteration did not converge, 3 file I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .baseline import solve_concave
from .config import RunConfig, help_defaults, load_config
from .engine import (
    SWEEP_AXES,
    ConfigError,
    ScenarioConfig,
    UndefinedEfficiencyError,
    draw_population,
    resolve,
    run_simulation,
    solve_baseline,
    sweep,
)
from .game import GameConfig, UndefinedPoAError, nash_solve, poa
from .io import summary_json, write_json, write_table, write_trace
from .utility import LogUtility, PayoffUtility, PenaltyFn

__all__ = ["main", "build_parser", "build_game"]

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3
SWEEP_COLUMNS = ("value", "seed", "efficiency", "aggregate", "converged_round",
                 "objective_distributed", "objective_optimal")
NASH_COLUMNS = ("value", "poa", "welfare_ne", "welfare_opt", "aggregate_ne", "iterations",
                "residual", "converged")

log = logging.getLogger("aimdalloc")


class _Usage(ValueError):
    pass


def parse_values(text: str) -> List[float]:
    """Comma separated numbers, or ``start:stop:step`` with both ends included."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(count)]
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _Usage(f"--values: cannot parse {text!r}") from None
    if not values:
        raise _Usage("--values: empty list")
    return values


def build_game(scenario: ScenarioConfig, p: int = 1) -> GameConfig:
    """Game among the scenario's log-utility population (run seed ignored)."""
    if scenario.utility.family != "log":
        raise ConfigError("utility.family", "the game needs log utilities")
    pop = scenario.seed if scenario.population_seed is None else scenario.population_seed
    eta, chi = draw_population(scenario.utility, scenario.n, pop)
    cap = scenario.capacity if scenario.capacity is not None else scenario.capacity_ratio * chi.sum()
    return GameConfig(LogUtility(eta, chi), float(cap), scenario.price, PenaltyFn(p, float(cap)))


def _game_point(scenario: ScenarioConfig, axis: Optional[str], value) -> ScenarioConfig:
    pop = scenario.seed if scenario.population_seed is None else scenario.population_seed
    scenario = scenario.replace(population_seed=pop)
    if axis == "L":
        return scenario.replace(price=float(value))
    if axis == "C_ratio":
        return scenario.replace(capacity=None, capacity_ratio=float(value))
    if axis == "n":
        return scenario.replace(n=int(value))
    if axis == "seed":
        return scenario.replace(population_seed=int(value))
    return scenario


def _paths(cfg: RunConfig, out_dir: Optional[str]):
    return Path(out_dir or cfg.out_dir), cfg.scenario.name


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_run(args, cfg: RunConfig) -> int:
    out, name = _paths(cfg, args.out_dir)
    trace, summary = run_simulation(cfg.scenario, record_trace=True)
    tpath = write_trace(out / f"{name}_trace.csv", trace)
    spath = write_json(out / f"{name}_summary.json", summary_json(summary))
    _say(args, f"efficiency {summary.efficiency:.6f}  trace {tpath}  summary {spath}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    axis = args.axis or cfg.sweep.axis
    if axis is None:
        raise _Usage("sweep needs --axis (or sweep.axis in the config)")
    values = parse_values(args.values) if args.values else list(cfg.sweep.values)
    if not values:
        raise _Usage("sweep needs --values (or sweep.values in the config)")
    out, name = _paths(cfg, args.out_dir)
    rows = sweep(cfg.scenario, axis, values, workers=args.workers or cfg.sweep.workers)
    table = [[getattr(r, c) for c in SWEEP_COLUMNS] for r in rows]
    path = write_table(out / f"{name}_sweep_{axis}.csv", (axis,) + SWEEP_COLUMNS[1:], table)
    for r in rows:
        _say(args, f"{axis}={r.value:g}  efficiency {r.efficiency:.6f}")
    _say(args, f"table {path}")
    return EXIT_OK


def cmd_baseline(args, cfg: RunConfig) -> int:
    out, name = _paths(cfg, args.out_dir)
    sc = resolve(cfg.scenario)
    res = solve_baseline(sc)
    payload = {"scenario": name, "capacity": sc.capacity, "objective": res.objective,
               "dual": res.dual, "residual": res.residual, "x_star": res.x_star}
    path = write_json(out / f"{name}_baseline.json", payload)
    _say(args, f"objective {res.objective:.6f}  baseline {path}")
    return EXIT_OK


def _nash_once(scenario: ScenarioConfig, cfg: RunConfig):
    game = build_game(scenario, cfg.game.p)
    res = nash_solve(game, tol=cfg.game.tol, max_iters=cfg.game.max_iters, damping=cfg.game.damping)
    base = solve_concave(PayoffUtility(game.models, game.price), game.capacity)
    value = poa(game, res, base)
    return game, res, base, value


def cmd_nash(args, cfg: RunConfig) -> int:
    out, name = _paths(cfg, args.out_dir)
    axis = args.axis or cfg.sweep.axis
    if axis is None:
        game, res, base, value = _nash_once(_game_point(cfg.scenario, None, None), cfg)
        payload = {"scenario": name, "capacity": game.capacity, "price": game.price, "p": game.penalty.p,
                   "poa": value, "converged": res.converged, "iterations": res.iterations,
                   "residual": res.residual, "first_order_residual": res.first_order_residual,
                   "damping": res.damping, "x_ne": res.x_ne, "x_star": base.x_star}
        path = write_json(out / f"{name}_nash.json", payload)
        _say(args, f"poa {value:.6f}  residual {res.residual:.3g}  nash {path}")
        ok = res.converged
    else:
        values = parse_values(args.values) if args.values else list(cfg.sweep.values)
        if not values:
            raise _Usage("nash sweep needs --values (or sweep.values in the config)")
        rows, ok = [], True
        for v in values:
            game, res, base, value = _nash_once(_game_point(cfg.scenario, axis, v), cfg)
            tau = float(np.sqrt(1.0 - min(res.x_ne.sum() / game.capacity, 1.0) ** game.penalty.p))
            welfare = float(np.sum(game.models.value(res.x_ne) * tau - game.price * res.x_ne))
            optimal = float(np.sum(PayoffUtility(game.models, game.price).value(base.x_star)))
            rows.append([v, value, welfare, optimal, res.x_ne.sum(), res.iterations,
                         res.residual, res.converged])
            ok &= res.converged
            _say(args, f"{axis}={v:g}  poa {value:.6f}")
        path = write_table(out / f"{name}_nash_{axis}.csv", (axis,) + NASH_COLUMNS[1:], rows)
        _say(args, f"table {path}")
    if not ok:
        print("error: Nash iteration did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "baseline": cmd_baseline, "nash": cmd_nash}
HELP = {
    "run": "simulate one scenario; writes <name>_trace.csv and <name>_summary.json",
    "sweep": "simulate one scenario per axis value; writes <name>_sweep_<axis>.csv",
    "baseline": "centralized optimum; writes <name>_baseline.json",
    "nash": "Nash equilibrium and price of anarchy; writes <name>_nash.json, "
            "or <name>_nash_<axis>.csv with --axis",
}


def build_parser() -> argparse.ArgumentParser:
    epilog = ("config defaults (required: scenario.n, scenario.algorithm, utility.family):\n"
              + "\n".join(help_defaults())
              + "\n  utility ranges: log eta=[0, 1] chi=[40, 60]; sigmoid eta=[0, 25] psi=[25, 100]"
              + "\n\nexit codes: 0 ok, 1 invalid config/arguments, 2 nash not converged, 3 I/O error")
    parser = argparse.ArgumentParser(prog="aimdalloc", description="AIMD resource allocation experiments",
                                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run,sweep,baseline,nash}")
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name], epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override scenario.seed (default: from config)")
        p.add_argument("--out-dir", default=None, help="output directory (default: output.out_dir, 'out')")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
        if name in ("sweep", "nash"):
            p.add_argument("--axis", choices=SWEEP_AXES, default=None,
                           help="swept parameter (default: sweep.axis)")
            p.add_argument("--values", default=None,
                           help="comma list or start:stop:step (default: sweep.values)")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None,
                           help="worker processes (default: sweep.workers, serial)")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, scenario=cfg.scenario.replace(seed=args.seed))
        return args.func(args, cfg)
    except (ConfigError, _Usage, UndefinedEfficiencyError, UndefinedPoAError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
