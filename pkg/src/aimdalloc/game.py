"""Competition for the shared capacity as a strategic game.

Two payoff variants are provided: the discontinuous one (a user gets nothing
once total demand exceeds capacity) and the penalized one, which multiplies
utility by a concave penalty of total demand and charges a unit price. Nash
equilibria of the penalized game are computed by damped simultaneous
best-response iteration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baseline import BaselineResult
from .utility import LogUtility, PayoffUtility, PenaltyFn, stack_models

__all__ = [
    "GameConfig",
    "NashResult",
    "UndefinedPoAError",
    "payoff_discontinuous",
    "br_discontinuous",
    "payoff_penalized",
    "best_response",
    "nash_solve",
    "poa",
]

log = logging.getLogger(__name__)


class UndefinedPoAError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GameConfig:
    models: LogUtility
    capacity: float
    price: float = 0.0
    penalty: Optional[PenaltyFn] = None

    def __post_init__(self):
        model = stack_models(self.models)
        if not isinstance(model, LogUtility):
            raise TypeError("game players need LogUtility models")
        object.__setattr__(self, "models", model)
        if not self.capacity > 0:
            raise ValueError("capacity must be > 0")
        if self.price < 0:
            raise ValueError("price must be >= 0")
        if self.penalty is None:
            object.__setattr__(self, "penalty", PenaltyFn(1, self.capacity))
        elif self.penalty.capacity != self.capacity:
            raise ValueError("penalty capacity must equal the game capacity")

    @property
    def n(self) -> int:
        return self.models.size


@dataclass
class NashResult:
    x_ne: np.ndarray
    iterations: int
    residual: float
    converged: bool
    first_order_residual: float = 0.0
    damping: float = 0.5
    poa: Optional[float] = None
    history: list = field(default_factory=list, repr=False)


def payoff_discontinuous(i: int, profile, config: GameConfig) -> float:
    """``u_i(x_i)`` while total demand fits the capacity, else 0."""
    profile = np.asarray(profile, dtype=float)
    if profile.sum() > config.capacity:
        return 0.0
    return float(config.models.take(i).value(profile[i]))


def br_discontinuous(others_sum: float, capacity: float) -> float:
    """Best reply in the discontinuous game: claim whatever the others left."""
    if not 0 <= others_sum <= capacity:
        raise ValueError(f"others_sum must lie in [0, {capacity}], got {others_sum}")
    return capacity - others_sum


def payoff_penalized(i: int, profile, config: GameConfig) -> float:
    """``u_i(x_i) * tau(sum x) - L * x_i``; raises DomainError above capacity."""
    profile = np.asarray(profile, dtype=float)
    tau = config.penalty(profile.sum())
    return float(config.models.take(i).value(profile[i]) * tau - config.price * profile[i])


def _tau(config, z):
    r = np.clip(np.asarray(z, dtype=float) / config.capacity, 0.0, 1.0)
    return np.sqrt(1.0 - r**config.penalty.p), r


def _own_value(config, z, others):
    """Penalized payoff of every player for own action ``z`` (arrays broadcast)."""
    tau, _ = _tau(config, z + others)
    return config.models.value(z) * tau - config.price * z


def _own_slope(config, z, others):
    """Partial derivative of the penalized payoff in the player's own action."""
    m, p, cap = config.models, config.penalty.p, config.capacity
    tau, r = _tau(config, z + others)
    with np.errstate(divide="ignore", invalid="ignore"):
        dtau = np.where(tau > 0, -p * r ** (p - 1) / (2.0 * cap * np.where(tau > 0, tau, 1.0)), -np.inf)
        u = np.asarray(m.value(z))
        slope = np.asarray(m.deriv(z)) * tau + np.where(u > 0, u * dtau, 0.0) - config.price
    return slope


def best_response(config: GameConfig, profile, scan: int = 64, iters: int = 200) -> np.ndarray:
    """Simultaneous best replies of all players to ``profile``.

    A coarse scan of ``scan`` points over each player's feasible interval
    ``[0, C - others]`` brackets the maximizer; bisection on the analytic own
    slope (decreasing, the payoff being concave in the own action) then
    pins it to machine precision.
    """
    x = np.asarray(profile, dtype=float)
    others = x.sum() - x
    hi = np.maximum(config.capacity - others, 0.0)
    pts = np.linspace(0.0, 1.0, scan)[:, None] * hi[None, :]
    k = np.argmax(_own_value(config, pts, others), axis=0)
    cols = np.arange(x.size)
    a = pts[np.maximum(k - 1, 0), cols]
    b = pts[np.minimum(k + 1, scan - 1), cols]
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = _own_slope(config, mid, others) > 0
        a_new = np.where(up, mid, a)
        b_new = np.where(up, b, mid)
        if np.array_equal(a_new, a) and np.array_equal(b_new, b):
            break
        a, b = a_new, b_new
    out = 0.5 * (a + b)
    # concavity: a nonpositive slope at 0 means the corner is optimal
    out = np.where(_own_slope(config, np.zeros_like(x), others) <= 0, 0.0, out)
    return np.where(hi > 0, np.minimum(out, hi), 0.0)


def nash_solve(config: GameConfig, tol: float = 1e-8, max_iters: int = 10_000,
               damping: float = 0.5, x0=None, window: int = 50) -> NashResult:
    """Damped best-response iteration ``x <- (1-d) x + d BR(x)``.

    Stops once ``max |BR(x) - x| <= tol``. If the residual fails to halve over
    ``window`` iterations the damping is halved (down to 1e-3); undamped or
    lightly damped Jacobi updates oscillate in large aggregative games.
    Non-convergence is reported, not raised.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    n, cap = config.n, config.capacity
    x = np.full(n, cap / (2 * n)) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,) or np.any(x < 0):
        raise ValueError("x0 must be a nonnegative profile of length n")
    d = damping
    ref = np.inf
    history = []
    it = 0
    residual = np.inf
    while True:
        br = best_response(config, x)
        residual = float(np.max(np.abs(br - x)))
        history.append(residual)
        if residual <= tol or it >= max_iters:
            break
        if it % window == 0:
            if it and residual > 0.5 * ref and d > 1e-3:
                d = max(d / 2, 1e-3)
                log.debug("nash: damping reduced to %g at iteration %d", d, it)
            ref = residual
        x = (1 - d) * x + d * br
        it += 1
    converged = residual <= tol
    if not converged:
        log.warning("nash iteration did not converge: residual %.3g after %d iterations", residual, it)
    others = x.sum() - x
    slack = config.capacity - others - x
    interior = (x > 0) & (slack > 1e-9 * config.capacity)
    slopes = np.abs(_own_slope(config, x, others))
    foc = float(slopes[interior].max()) if interior.any() else 0.0
    return NashResult(x_ne=x, iterations=it, residual=residual, converged=converged,
                      first_order_residual=foc, damping=d, history=history)


def poa(config: GameConfig, nash: NashResult, baseline: BaselineResult) -> float:
    """Penalized equilibrium welfare over the unpenalized optimal payoff welfare."""
    x = nash.x_ne
    tau, _ = _tau(config, x.sum())
    num = float(np.sum(config.models.value(x) * tau - config.price * x))
    den = float(np.sum(PayoffUtility(config.models, config.price).value(baseline.x_star)))
    if den <= 0:
        raise UndefinedPoAError(f"optimal welfare {den} is not positive")
    value = num / den
    nash.poa = value
    return value
