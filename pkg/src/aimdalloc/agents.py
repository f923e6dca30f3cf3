"""Per-user AIMD state machines.

Each step function is a pure transition ``(state, signal, draw) -> state``.
States may hold scalars (one user) or arrays (a population stepped in
lockstep); users never read each other's entries.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .utility import PayoffUtility, SigmoidUtility, _out

__all__ = [
    "AimdParams",
    "AgentState",
    "initial_state",
    "calibrate_gamma",
    "update_running_average",
    "lambda_of",
    "aimd_step",
    "daimd_step",
    "paimd_step",
    "qaimd_step",
    "STEPS",
]

DAIMD_SEMANTICS = ("as-written", "expectation")


@dataclass(frozen=True)
class AimdParams:
    """Parameters broadcast to every user.

    ``gamma`` scales the back-off probability of AIMD, DAIMD and PAIMD;
    ``gamma1``/``gamma2`` are the below/above-inflection scales of QAIMD.
    ``None`` means "not calibrated yet" (see :func:`calibrate_gamma`).
    """

    alpha: float = 1.0
    beta: float = 0.85
    gamma: Optional[float] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    lambda_floor: float = 0.001
    lambda_ceil: float = 0.999
    daimd_semantics: str = "as-written"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not 0 <= self.lambda_floor < self.lambda_ceil <= 1:
            raise ValueError(
                "need 0 <= lambda_floor < lambda_ceil <= 1, got "
                f"{self.lambda_floor!r}, {self.lambda_ceil!r}"
            )
        for name in ("gamma", "gamma1", "gamma2"):
            g = getattr(self, name)
            if g is not None and not (np.isfinite(g) and g > 0):
                raise ValueError(f"{name} must be > 0, got {g!r}")
        if self.daimd_semantics not in DAIMD_SEMANTICS:
            raise ValueError(
                f"daimd_semantics must be one of {DAIMD_SEMANTICS}, got {self.daimd_semantics!r}"
            )


@dataclass(frozen=True)
class AgentState:
    """Private state of one user, or of a population when fields are arrays.

    ``t`` is the index of the newest allocation folded into ``xbar``.
    """

    x: Any
    xbar: Any
    t: int = 0
    lam: Any = float("nan")
    utility: Any = None
    xstar: Any = None
    psi: Any = None


def initial_state(utility, x0=0.0, xstar=None, psi=None) -> AgentState:
    """State at round 0: ``xbar`` is the one-element average of ``x(0)``."""
    shape = np.shape(utility._first()) if utility is not None else np.shape(x0)
    x = np.broadcast_to(np.asarray(x0, dtype=float), shape).copy() if shape else float(x0)
    if np.any(np.asarray(x) < 0):
        raise ValueError("initial allocation must be >= 0")
    if psi is None and isinstance(utility, SigmoidUtility):
        psi = utility.psi
    nan = np.full(shape, np.nan) if shape else float("nan")
    return AgentState(x=x, xbar=_out(np.array(x, copy=True)), t=0, lam=nan,
                      utility=utility, xstar=xstar, psi=psi)


def _positive_deriv(utility, x):
    return np.maximum(np.asarray(utility.deriv(x), dtype=float), 0.0)


def calibrate_gamma(utility, alpha: float, capacity: float, safety: float = 0.9,
                    grid: int = 4001) -> float:
    """Largest safe probability scale: ``safety / max_i sup_x u_i'(x)/x``.

    The supremum is taken over ``x in [alpha, capacity]`` (ends swapped when
    ``capacity < alpha``) by a dense grid followed by a bounded local search
    around the best grid point of every user. Negative marginals count as 0.
    """
    lo, hi = sorted((float(alpha), float(capacity)))
    xs = np.linspace(lo, hi, grid)
    n = utility.size
    best = 0.0
    for i in range(n):
        u = utility.take(i)
        ratio = _positive_deriv(u, xs) / xs
        k = int(np.argmax(ratio))
        peak = float(ratio[k])
        a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
        if b > a:
            res = minimize_scalar(lambda z: -float(_positive_deriv(u, z)) / z,
                                  bounds=(a, b), method="bounded", options={"xatol": 1e-12})
            peak = max(peak, -float(res.fun))
        best = max(best, peak)
    if best <= 0:
        # nobody ever has a positive marginal: lambda stays at its floor anyway
        return 1.0
    return safety / best


def update_running_average(state: AgentState) -> AgentState:
    """Fold the current allocation into the running mean of ``x(0..t)``."""
    t = state.t + 1
    xbar = (t * np.asarray(state.xbar) + np.asarray(state.x)) / (t + 1)
    return dataclasses.replace(state, xbar=_out(xbar), t=t)


def lambda_of(state: AgentState, params: AimdParams, which: str = "gamma"):
    """Back-off probability ``clamp(G * u'(xbar) / max(xbar, alpha))``.

    ``which`` selects the scale: ``"gamma"``, ``"gamma1"`` or ``"gamma2"``.
    The ``max(xbar, alpha)`` denominator removes the singularity at 0.
    """
    g = getattr(params, which)
    if g is None:
        raise ValueError(f"{which} is not calibrated")
    xbar = np.asarray(state.xbar, dtype=float)
    lam = g * _positive_deriv(state.utility, xbar) / np.maximum(xbar, params.alpha)
    return _out(np.clip(lam, params.lambda_floor, params.lambda_ceil))


def aimd_step(state: AgentState, params: AimdParams, over_capacity: bool, rng_draw) -> AgentState:
    """Stochastic AIMD: add alpha, or on congestion shrink by beta with probability lambda."""
    lam = lambda_of(state, params)
    x = np.asarray(state.x, dtype=float)
    if over_capacity:
        x = np.where(np.asarray(rng_draw) < lam, params.beta * x, x)
    else:
        x = x + params.alpha
    return dataclasses.replace(state, x=_out(x), lam=lam)


def daimd_step(state: AgentState, params: AimdParams, over_capacity: bool) -> AgentState:
    """Deterministic AIMD.

    ``"as-written"`` applies ``beta*(1-lam)*x + lam*x``; ``"expectation"``
    applies the mean of the stochastic decrease, ``x*(1 - lam*(1-beta))``.
    """
    lam = lambda_of(state, params)
    x = np.asarray(state.x, dtype=float)
    if over_capacity:
        if params.daimd_semantics == "as-written":
            x = params.beta * (1.0 - lam) * x + lam * x
        else:
            x = x * (1.0 - lam * (1.0 - params.beta))
    else:
        x = x + params.alpha
    return dataclasses.replace(state, x=_out(x), lam=lam)


def paimd_step(state: AgentState, params: AimdParams, over_capacity: bool, rng_draw) -> AgentState:
    """AIMD for payoffs: the additive phase never passes the user's own payoff maximizer."""
    if state.xstar is None:
        raise ValueError("PAIMD state needs xstar")
    if not isinstance(state.utility, PayoffUtility):
        raise TypeError("PAIMD state needs a PayoffUtility")
    lam = lambda_of(state, params)
    x = np.asarray(state.x, dtype=float)
    if over_capacity:
        x = np.where(np.asarray(rng_draw) < lam, params.beta * x, x)
    else:
        x = np.minimum(state.xstar, x + params.alpha)
    return dataclasses.replace(state, x=_out(x), lam=lam)


def qaimd_step(state: AgentState, params: AimdParams, over_capacity: bool, rng_draw) -> AgentState:
    """AIMD variant for sigmoidal utilities.

    Below the inflection point (by running average) a user grows
    multiplicatively by ``1/beta`` with probability ``lambda(gamma1)`` and
    retreats additively on congestion; above it plain AIMD with
    ``lambda(gamma2)`` applies.
    """
    if state.psi is None:
        raise ValueError("QAIMD state needs psi")
    below = np.asarray(state.xbar) < state.psi
    lam = _out(np.where(below, lambda_of(state, params, "gamma1"),
                        lambda_of(state, params, "gamma2")))
    x = np.asarray(state.x, dtype=float)
    hit = np.asarray(rng_draw) < lam
    if over_capacity:
        x = np.where(below, np.maximum(0.0, x - params.alpha), np.where(hit, params.beta * x, x))
    else:
        x = np.where(below, np.where(hit, x / params.beta, x), x + params.alpha)
    return dataclasses.replace(state, x=_out(x), lam=lam)


def _daimd_adapter(state, params, over_capacity, rng_draw=None):
    return daimd_step(state, params, over_capacity)


STEPS = {
    "aimd": aimd_step,
    "daimd": _daimd_adapter,
    "paimd": paimd_step,
    "qaimd": qaimd_step,
}
