"""Synchronous round-based simulation of a population of AIMD users.

Every round the engine computes the one-bit congestion signal from the
previous round's aggregate demand, steps each user with that bit and the
user's own random draw, folds the new allocation into the running averages
and records the round.

Randomness comes from numpy's ``PCG64`` bit generator keyed by
``SeedSequence(seed, spawn_key=...)``: population parameters use spawn key
``(0,)`` of the population seed, user ``i`` draws from spawn key ``(1, i)``
of the run seed. Streams are independent of one another and of ``n``, and
reproducible across platforms.
"""
from __future__ import annotations

import dataclasses
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .agents import STEPS, AimdParams, calibrate_gamma, initial_state, update_running_average
from .baseline import BaselineResult, solve_concave, solve_sigmoidal
from .utility import LogUtility, PayoffUtility, SigmoidUtility

__all__ = [
    "ConfigError",
    "UndefinedEfficiencyError",
    "UtilitySpec",
    "ScenarioConfig",
    "Scenario",
    "TraceRecord",
    "Trace",
    "SimulationSummary",
    "SweepRow",
    "resolve",
    "solve_baseline",
    "run_simulation",
    "efficiency",
    "sweep",
    "derive_seed",
    "ALGORITHMS",
    "SWEEP_AXES",
]

log = logging.getLogger(__name__)

ALGORITHMS = {"aimd": "log", "daimd": "log", "paimd": "log", "qaimd": "sigmoid"}
SWEEP_AXES = ("L", "C_ratio", "n", "seed")
FAMILY_DEFAULTS = {
    "log": {"eta": (0.0, 1.0), "chi": (40.0, 60.0)},
    "sigmoid": {"eta": (0.0, 25.0), "psi": (25.0, 100.0)},
}
CONVERGENCE_TOL = 1e-3
CONVERGENCE_WINDOW = 100


class ConfigError(ValueError):
    """Invalid or unresolvable scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UndefinedEfficiencyError(ArithmeticError):
    pass


def _check_range(name, rng):
    if rng is None:
        return None
    try:
        lo, hi = (float(v) for v in rng)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected [low, high], got {rng!r}") from None
    if not (0 <= lo < hi and np.isfinite(hi)):
        raise ConfigError(name, f"need 0 <= low < high, got [{lo}, {hi}]")
    return (lo, hi)


@dataclass(frozen=True)
class UtilitySpec:
    """How per-user utility parameters are obtained.

    Either uniform ranges (``eta`` plus ``chi`` for the log family or ``psi``
    for the sigmoid family), or an explicit list ``users`` of
    ``(eta, chi_or_psi)`` pairs.
    """

    family: str = "log"
    eta: Optional[Tuple[float, float]] = None
    chi: Optional[Tuple[float, float]] = None
    psi: Optional[Tuple[float, float]] = None
    users: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.family not in FAMILY_DEFAULTS:
            raise ConfigError("utility.family", f"must be one of {sorted(FAMILY_DEFAULTS)}")
        defaults = FAMILY_DEFAULTS[self.family]
        for key in ("eta", "chi", "psi"):
            value = getattr(self, key)
            if value is None and key in defaults:
                value = defaults[key]
            object.__setattr__(self, key, _check_range(f"utility.{key}", value))
        if self.users is not None:
            users = tuple(tuple(float(v) for v in u) for u in self.users)
            if not users or any(len(u) != 2 or min(u) <= 0 for u in users):
                raise ConfigError("utility.users", "expected a list of positive [eta, scale] pairs")
            object.__setattr__(self, "users", users)

    @property
    def scale_name(self) -> str:
        return "chi" if self.family == "log" else "psi"


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation experiment.

    Capacity is either absolute (``capacity``) or a ratio of the summed
    saturation points: ``capacity_ratio * sum(chi)`` for log utilities,
    ``capacity_ratio * sum(psi)`` for sigmoids. ``x0=None`` starts every user
    at 0, except under QAIMD where 0 absorbs the multiplicative growth and
    users start at ``alpha`` instead.
    """

    n: int
    algorithm: str
    utility: UtilitySpec = field(default_factory=UtilitySpec)
    capacity: Optional[float] = None
    capacity_ratio: float = 0.35
    params: AimdParams = field(default_factory=AimdParams)
    price: float = 0.0
    horizon: int = 10_000
    seed: int = 0
    population_seed: Optional[int] = None
    x0: Optional[float] = None
    name: str = "scenario"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {sorted(ALGORITHMS)}, got {self.algorithm!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n", f"must be an integer >= 1, got {self.n!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon", f"must be an integer >= 1, got {self.horizon!r}")
        if self.capacity is not None and not (np.isfinite(self.capacity) and self.capacity > 0):
            raise ConfigError("capacity", f"must be > 0, got {self.capacity!r}")
        if not (np.isfinite(self.capacity_ratio) and self.capacity_ratio > 0):
            raise ConfigError("capacity_ratio", f"must be > 0, got {self.capacity_ratio!r}")
        if not (np.isfinite(self.price) and self.price >= 0):
            raise ConfigError("price", f"must be >= 0, got {self.price!r}")
        for key in ("seed", "population_seed"):
            v = getattr(self, key)
            if v is not None and (int(v) != v or not 0 <= v < 2**64):
                raise ConfigError(key, f"must be an integer in [0, 2**64), got {v!r}")
        if self.x0 is not None and not (np.isfinite(self.x0) and self.x0 >= 0):
            raise ConfigError("x0", f"must be >= 0, got {self.x0!r}")
        if self.utility.users is not None and self.n > len(self.utility.users):
            raise ConfigError("n", f"{self.n} users requested but only {len(self.utility.users)} listed")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "horizon", int(self.horizon))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Scenario:
    """A config resolved into concrete models, capacity and calibrated parameters."""

    config: ScenarioConfig
    utility: object  # drives the dynamics (u, v or w)
    objective: object  # scored by efficiency
    capacity: float
    params: AimdParams
    xstar: Optional[np.ndarray]
    x0: float


def _uniform_open(lo, hi, u):
    vals = lo + (hi - lo) * u
    return np.where(vals <= lo, np.nextafter(lo, hi), vals)


def draw_population(spec: UtilitySpec, n: int, seed: int):
    """``(eta, scale)`` arrays for ``n`` users; the first ``k`` users do not depend on ``n``."""
    if spec.users is not None:
        arr = np.array(spec.users[:n], dtype=float)
        return arr[:, 0].copy(), arr[:, 1].copy()
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    u = gen.random((n, 2))
    scale = getattr(spec, spec.scale_name)
    return _uniform_open(*spec.eta, u[:, 0]), _uniform_open(*scale, u[:, 1])


def resolve(config: ScenarioConfig) -> Scenario:
    family = ALGORITHMS[config.algorithm]
    if config.utility.family != family:
        raise ConfigError(
            "utility.family",
            f"{config.algorithm} needs {family} utilities, got {config.utility.family}",
        )
    pop_seed = config.seed if config.population_seed is None else config.population_seed
    eta, scale = draw_population(config.utility, config.n, pop_seed)
    if config.capacity is not None:
        cap = float(config.capacity)
    else:
        cap = float(config.capacity_ratio * scale.sum())
    p = config.params
    xstar = None
    if family == "log":
        base = LogUtility(eta, scale)
        objective = PayoffUtility(base, config.price)
        dynamics = objective if config.algorithm == "paimd" else base
        if config.algorithm == "paimd":
            xstar = np.asarray(objective.argmax(cap), dtype=float)
        if p.gamma is None:
            p = dataclasses.replace(p, gamma=calibrate_gamma(dynamics, p.alpha, cap))
        x0 = 0.0 if config.x0 is None else config.x0
    else:
        dynamics = objective = SigmoidUtility(eta, scale)
        g = None
        if p.gamma1 is None or p.gamma2 is None:
            g = calibrate_gamma(dynamics, p.alpha, cap)
        p = dataclasses.replace(
            p,
            gamma1=p.gamma1 if p.gamma1 is not None else g,
            gamma2=p.gamma2 if p.gamma2 is not None else g,
        )
        x0 = p.alpha if config.x0 is None else config.x0
    return Scenario(config=config, utility=dynamics, objective=objective, capacity=cap,
                    params=p, xstar=xstar, x0=float(x0))


def solve_baseline(scenario: Scenario, bins: int = 2000) -> BaselineResult:
    if isinstance(scenario.objective, SigmoidUtility):
        return solve_sigmoidal(scenario.objective, scenario.capacity, bins=bins)
    return solve_concave(scenario.objective, scenario.capacity)


class TraceRecord(NamedTuple):
    t: int
    agent: int
    x: float
    xbar: float
    lam: float
    signal: bool
    sum_x: float


TRACE_COLUMNS = ("t", "agent", "x", "xbar", "lambda", "signal", "sum_x")


@dataclass
class Trace:
    """Per-round observables; row ``k`` holds round ``t = k + 1``."""

    x: np.ndarray
    xbar: np.ndarray
    lam: np.ndarray
    signal: np.ndarray
    sum_x: np.ndarray

    def __len__(self) -> int:
        return self.x.size

    def records(self) -> Iterator[TraceRecord]:
        rounds, n = self.x.shape
        for k in range(rounds):
            sig, tot = bool(self.signal[k]), float(self.sum_x[k])
            for i in range(n):
                yield TraceRecord(k + 1, i, float(self.x[k, i]), float(self.xbar[k, i]),
                                  float(self.lam[k, i]), sig, tot)


@dataclass
class SimulationSummary:
    scenario: str
    algorithm: str
    seed: int
    T: int
    n: int
    capacity: float
    efficiency: float
    objective_distributed: float
    objective_optimal: float
    converged_round: Optional[int]
    xbar: np.ndarray
    x_final: np.ndarray
    x_star: np.ndarray
    gamma: Optional[float] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("xbar", "x_final", "x_star"):
            d[k] = [float(v) for v in np.asarray(d[k])]
        return d


def derive_seed(base: int, axis: str, value) -> int:
    """Run seed for one sweep point, a stable function of (base seed, axis, value)."""
    tag = zlib.crc32(f"{axis}={float(value)!r}".encode())
    ss = np.random.SeedSequence([int(base), tag])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def agent_draws(seed: int, n: int, horizon: int) -> np.ndarray:
    """``(horizon, n)`` uniforms; column ``i`` is user ``i``'s private stream."""
    out = np.empty((horizon, n))
    for i in range(n):
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, i))))
        out[:, i] = gen.random(horizon)
    return out


def run_simulation(config: ScenarioConfig, record_trace: bool = True,
                   baseline: Optional[BaselineResult] = None) -> Tuple[Optional[Trace], SimulationSummary]:
    """Run one scenario for ``config.horizon`` rounds.

    Returns the trace (``None`` when ``record_trace`` is false) and a summary
    whose efficiency is computed from the final running averages.
    """
    sc = resolve(config)
    n, T, cap = config.n, config.horizon, sc.capacity
    step = STEPS[config.algorithm]
    draws = agent_draws(config.seed, n, T) if config.algorithm != "daimd" else None
    state = initial_state(sc.utility, sc.x0, xstar=sc.xstar)
    if record_trace:
        xs, xbars, lams = (np.empty((T, n)) for _ in range(3))
        sig, tot = np.empty(T, dtype=bool), np.empty(T)
    prev_sum = float(np.sum(state.x))
    streak, converged = 0, None
    for t in range(1, T + 1):
        over = prev_sum > cap
        before = np.asarray(state.xbar)
        state = step(state, sc.params, over, None if draws is None else draws[t - 1])
        state = update_running_average(state)
        xbar = np.asarray(state.xbar)
        change = np.max(np.abs(xbar - before) / np.maximum(np.abs(before), 1e-12))
        if change < CONVERGENCE_TOL:
            streak += 1
            if streak == CONVERGENCE_WINDOW and converged is None:
                converged = t - CONVERGENCE_WINDOW + 1
        else:
            streak = 0
        prev_sum = float(np.sum(state.x))
        if record_trace:
            xs[t - 1], xbars[t - 1], lams[t - 1] = state.x, xbar, state.lam
            sig[t - 1], tot[t - 1] = over, prev_sum
    xbar = np.array(state.xbar, dtype=float)
    baseline = baseline or solve_baseline(sc)
    eff, num, den = _efficiency_parts(xbar, sc, baseline)
    summary = SimulationSummary(
        scenario=config.name, algorithm=config.algorithm, seed=int(config.seed), T=T, n=n,
        capacity=cap, efficiency=eff, objective_distributed=num, objective_optimal=den,
        converged_round=converged, xbar=xbar, x_final=np.array(state.x, dtype=float),
        x_star=np.asarray(baseline.x_star, dtype=float),
        gamma=sc.params.gamma, gamma1=sc.params.gamma1, gamma2=sc.params.gamma2,
    )
    trace = Trace(xs, xbars, lams, sig, tot) if record_trace else None
    return trace, summary


def _efficiency_parts(xbar, sc: Scenario, baseline: BaselineResult):
    num = float(np.sum(sc.objective.value(np.asarray(xbar, dtype=float))))
    den = float(np.sum(sc.objective.value(np.asarray(baseline.x_star, dtype=float))))
    if den == 0:
        raise UndefinedEfficiencyError("optimal objective is zero")
    return num / den, num, den


def efficiency(xbar_final, config, baseline: Optional[BaselineResult] = None) -> float:
    """Distributed welfare at ``xbar_final`` over centralized optimal welfare.

    ``config`` may be a ScenarioConfig or an already resolved Scenario.
    """
    sc = config if isinstance(config, Scenario) else resolve(config)
    return _efficiency_parts(xbar_final, sc, baseline or solve_baseline(sc))[0]


@dataclass
class SweepRow:
    value: float
    seed: int
    efficiency: float
    aggregate: float
    converged_round: Optional[int]
    objective_distributed: float
    objective_optimal: float


def sweep_config(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """The scenario run for one sweep point.

    The population stays pinned to the template's population seed; the run
    seed is derived from the template seed, the axis and the value (or is the
    value itself on the ``seed`` axis).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
    pop = config.seed if config.population_seed is None else config.population_seed
    changes = {"population_seed": pop}
    if axis == "L":
        changes["price"] = float(value)
    elif axis == "C_ratio":
        changes.update(capacity=None, capacity_ratio=float(value))
    elif axis == "n":
        if float(value) != int(value):
            raise ConfigError("values", f"n must be an integer, got {value!r}")
        changes["n"] = int(value)
    if axis == "seed":
        changes["seed"] = int(value)
    else:
        changes["seed"] = derive_seed(config.seed, axis, value)
    return config.replace(**changes)


def _sweep_point(cfg: ScenarioConfig) -> SimulationSummary:
    return run_simulation(cfg, record_trace=False)[1]


def sweep(config: ScenarioConfig, axis: str, values: Sequence, workers: Optional[int] = None) -> List[SweepRow]:
    """Run one scenario per value of ``axis``; rows come back in value order."""
    configs = [sweep_config(config, axis, v) for v in values]
    if workers and workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_point, configs))
    else:
        summaries = [_sweep_point(c) for c in configs]
    return [
        SweepRow(value=float(v), seed=c.seed, efficiency=s.efficiency,
                 aggregate=float(np.sum(s.x_final)), converged_round=s.converged_round,
                 objective_distributed=s.objective_distributed, objective_optimal=s.objective_optimal)
        for v, c, s in zip(values, configs, summaries)
    ]
