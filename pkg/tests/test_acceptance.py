"""Acceptance suite: one PASS/FAIL line per criterion.

Every criterion runs at its stated tolerance on fixed, pre-chosen seeds
(populations 0..9, run seeds 0..9). Lines are printed at the end of the
pytest session and when this file is executed directly.
"""
from pathlib import Path

import numpy as np
import pytest

from aimdalloc.agents import STEPS, AimdParams, initial_state, update_running_average
from aimdalloc.baseline import brute_force_oracle, solve_concave, solve_sigmoidal
from aimdalloc.cli import build_game
from aimdalloc.config import load_config
from aimdalloc.engine import ScenarioConfig, UtilitySpec, run_simulation, sweep
from aimdalloc.game import GameConfig, br_discontinuous, nash_solve, poa
from aimdalloc.io import trace_csv
from aimdalloc.utility import LogUtility, PayoffUtility, PenaltyFn, SigmoidUtility

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = range(10)
LOG = UtilitySpec("log", eta=(0.0, 1.0), chi=(40.0, 60.0))
SIG = UtilitySpec("sigmoid", eta=(0.0, 25.0), psi=(25.0, 100.0))
STANDARD = dict(n=50, utility=LOG, capacity_ratio=0.35, params=AimdParams(alpha=1.0, beta=0.85), horizon=10_000)

RESULTS = {}


def curve(values):
    return "[" + " ".join(f"{v:.3f}" for v in values) + "]"


def report(cid, title, ok, detail):
    line = f"{cid} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[cid] = line
    print(line)
    assert ok, line


def test_c1_daimd_efficiency():
    effs = np.array([run_simulation(ScenarioConfig(algorithm="daimd", seed=s, **STANDARD),
                                    record_trace=False)[1].efficiency for s in SEEDS])
    wide = int(np.sum((effs > 0.95) & (effs < 1.00)))
    narrow = int(np.sum((effs > 0.97) & (effs < 0.99)))
    report("C1", "DAIMD efficiency", wide == 10 and narrow >= 7,
           f"{wide}/10 in (0.95, 1.00) [need 10], {narrow}/10 in (0.97, 0.99) [need >= 7]; "
           f"min {effs.min():.4f} median {np.median(effs):.4f} max {effs.max():.4f}")


def test_c2_stochastic_matches_deterministic():
    base = ScenarioConfig(algorithm="aimd", population_seed=0, **STANDARD)
    det = run_simulation(base.replace(algorithm="daimd"), record_trace=False)[1].xbar
    runs = np.array([run_simulation(base.replace(seed=s), record_trace=False)[1].xbar for s in SEEDS])
    rel = np.abs(runs.mean(axis=0) - det) / det
    within = int(np.sum(rel <= 0.05))
    report("C2", "stochastic AIMD vs DAIMD", within == 50,
           f"{within}/50 users within 5% [need 50]; max deviation {rel.max():.1%}, median {np.median(rel):.1%}")


def test_c3_paimd_price_sweep():
    values = [round(0.1 * k, 1) for k in range(11)]
    rows = sweep(ScenarioConfig(algorithm="paimd", seed=0, **STANDARD), "L", values)
    eff = np.array([r.efficiency for r in rows])
    k = int(np.argmin(eff))
    interior = 0 < k < len(values) - 1
    ok = interior and values[k] in (0.2, 0.3, 0.4) and eff[-1] >= 0.97
    report("C3", "PAIMD price sweep shape", ok,
           f"argmin L={values[k]} [need 0.2-0.4], efficiency(1.0)={eff[-1]:.4f} [need >= 0.97]; "
           f"curve {curve(eff)}")


def test_c4_qaimd_capacity_sweep():
    values = [0.5 + 0.25 * k for k in range(11)]
    rows = sweep(ScenarioConfig(algorithm="qaimd", seed=0, **{**STANDARD, "utility": SIG}), "C_ratio", values)
    eff = np.array([r.efficiency for r in rows])
    middle = eff[[i for i, v in enumerate(values) if 0.75 <= v <= 1.5]].min()
    ok = eff[0] - middle >= 0.05 and eff[-1] - middle >= 0.05
    report("C4", "QAIMD capacity sweep shape", ok,
           f"eff(0.5)-min={eff[0] - middle:.4f}, eff(3.0)-min={eff[-1] - middle:.4f} [need >= 0.05 each]; "
           f"curve {curve(eff)}")


def test_c5_concave_baseline():
    rng = np.random.default_rng(0)
    gaps, kkt = [], []
    for _ in range(50):
        u = LogUtility(rng.uniform(0.01, 25, 3), rng.uniform(25, 100, 3))
        cap = rng.uniform(0.1, 0.9) * float(np.sum(u.chi))
        res = solve_concave(u, cap)
        ref = brute_force_oracle(u, cap, grid=200, refine=4)
        gaps.append(abs(res.objective - ref.objective) / abs(ref.objective))
        kkt.append(res.residual)
    ok = max(gaps) <= 1e-4 and max(kkt) <= 1e-8
    report("C5", "water-filling vs grid oracle", ok,
           f"max relative gap {max(gaps):.2e} [<= 1e-4], max KKT residual {max(kkt):.2e} [<= 1e-8]")


def test_c6_sigmoidal_dp():
    rng = np.random.default_rng(0)
    exact = 0
    for _ in range(20):
        w = SigmoidUtility(rng.uniform(0.01, 25, 2), rng.uniform(25, 100, 2))
        cap = rng.uniform(0.25, 1.5) * float(np.sum(w.psi))
        dp = solve_sigmoidal(w, cap, bins=1000, refine=False)
        ex = brute_force_oracle(w, cap, grid=1000)
        exact += dp.objective == ex.objective
    report("C6", "sigmoidal DP vs exhaustive grid", exact == 20, f"{exact}/20 identical objectives")


def _grid_equilibrium(config, steps=1000):
    g = np.linspace(0.0, config.capacity, steps + 1)
    own, other = np.meshgrid(g, g, indexing="ij")
    total = own + other
    tau = np.sqrt(1.0 - np.clip(total / config.capacity, 0, 1) ** config.penalty.p)
    feasible = total <= config.capacity * (1 + 1e-12)
    br = [np.argmax(np.where(feasible, config.models.take(i)(own) * tau - config.price * own, -np.inf), axis=0)
          for i in range(2)]
    idx = np.arange(steps + 1)
    i = int(np.argmin(np.abs(br[0][br[1][idx]] - idx)))
    return np.array([g[i], g[br[1][i]]]), g[1] - g[0]


def test_c7_nash_and_poa():
    game = GameConfig(LogUtility(np.array([15.0, 38.0]), np.array([30.0, 70.0])), 25.0, 0.0, PenaltyFn(1, 25.0))
    res = nash_solve(game)
    ref, step = _grid_equilibrium(game)
    dist = float(np.max(np.abs(res.x_ne - ref)))
    scenario = load_config(CONFIGS / "poa_price.yaml").scenario
    decreasing, at_zero = 0, None
    prices = [round(0.1 * k, 1) for k in range(11)]
    for price in prices:
        values = []
        for n in (2, 10, 50):
            g = build_game(scenario.replace(n=n, price=price))
            r = nash_solve(g)
            values.append(poa(g, r, solve_concave(PayoffUtility(g.models, price), g.capacity)))
        decreasing += values[0] > values[1] > values[2]
        if price == 0.0:
            at_zero = values
    ok = res.residual <= 1e-8 and dist <= step and decreasing == len(prices)
    report("C7", "Nash equilibrium and PoA", ok,
           f"2-player residual {res.residual:.1e} [<= 1e-8], grid distance {dist:.4f} [<= {step:.3f}]; "
           f"PoA strictly decreasing over n=2,10,50 at {decreasing}/{len(prices)} prices "
           f"(L=0: {at_zero[0]:.3f}, {at_zero[1]:.3f}, {at_zero[2]:.3f})")


def _fd_ok(rng):
    for _ in range(1000):
        x = rng.uniform(0, 150)
        for m in (LogUtility(rng.uniform(0.01, 25), rng.uniform(25, 100)),
                  PayoffUtility(LogUtility(rng.uniform(0.01, 25), rng.uniform(25, 100)), rng.uniform(0, 2)),
                  SigmoidUtility(rng.uniform(0.01, 25), rng.uniform(25, 100))):
            h = 1e-6 * max(1.0, x)
            fd = (m(x + h) - m(x - h)) / (2 * h)
            if abs(m.deriv(x) - fd) > 1e-5 * (1 + abs(m.deriv(x))):
                return False
        tau = PenaltyFn(int(rng.integers(1, 9)), 50.0)
        z = rng.uniform(0.5, 49.5)
        if abs(tau.deriv(z) - (tau(z + 1e-6 * z) - tau(z - 1e-6 * z)) / (2e-6 * z)) > 1e-5 * (1 + abs(tau.deriv(z))):
            return False
    return True


def _steps_ok(rng):
    n, steps = 6, 10_000
    eta, scale = rng.uniform(0.05, 3, n), rng.uniform(25, 100, n)
    payoff = PayoffUtility(LogUtility(eta, scale), 0.3)
    cases = {
        "aimd": (initial_state(LogUtility(eta, scale), 0.0), AimdParams(gamma=2.0)),
        "daimd": (initial_state(LogUtility(eta, scale), 0.0), AimdParams(gamma=2.0)),
        "paimd": (initial_state(payoff, 0.0, xstar=payoff.argmax(60.0)), AimdParams(gamma=2.0)),
        "qaimd": (initial_state(SigmoidUtility(eta, scale), 1.0), AimdParams(gamma1=0.5, gamma2=0.5)),
    }
    for name, (s, p) in cases.items():
        over = rng.random(steps) < 0.5
        draws = rng.random((steps, n))
        for k in range(steps):
            s = update_running_average(STEPS[name](s, p, bool(over[k]), draws[k]))
            if np.any(s.x < 0) or np.any(s.xbar < 0):
                return False
            if np.any(s.lam < p.lambda_floor) or np.any(s.lam > p.lambda_ceil):
                return False
            if name == "paimd" and (np.any(s.x > s.xstar + p.alpha) or (not over[k] and np.any(s.x > s.xstar))):
                return False
    return True


def _continuum_ok(rng):
    for _ in range(500):
        n = int(rng.integers(2, 20))
        x = rng.dirichlet(np.ones(n)) * 25.0
        x[-1] = 25.0 - x[:-1].sum()
        if any(abs(br_discontinuous(min(x.sum() - x[i], 25.0), 25.0) - x[i]) > 1e-12 for i in range(n)):
            return False
    return True


def test_c8_property_suites():
    rng = np.random.default_rng(0)
    checks = {"finite differences": _fd_ok(rng), "lambda clamp, nonnegativity, PAIMD cap": _steps_ok(rng),
              "discontinuous-game continuum": _continuum_ok(rng)}
    small = ScenarioConfig(n=10, algorithm="aimd", utility=LOG, horizon=2000, seed=4)
    checks["byte-identical reruns"] = all(
        trace_csv(run_simulation(c)[0]) == trace_csv(run_simulation(c)[0])
        for c in (small, small.replace(algorithm="qaimd", utility=SIG)))
    failed = [k for k, v in checks.items() if not v]
    report("C8", "property suites", not failed, "all hold" if not failed else f"failed: {', '.join(failed)}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
