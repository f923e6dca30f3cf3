"""Centralized reference allocations.

``solve_concave`` equalizes marginal payoffs at a common dual price
(water-filling); ``solve_sigmoidal`` runs an exact dynamic program over a
capacity grid; ``brute_force_oracle`` enumerates the simplex for tiny ``n``
and exists to cross-check the other two.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .utility import LogUtility, PayoffUtility, SigmoidUtility, stack_models

__all__ = ["BaselineResult", "solve_concave", "solve_sigmoidal", "brute_force_oracle"]


@dataclass(frozen=True)
class BaselineResult:
    x_star: np.ndarray
    objective: float
    dual: Optional[float] = None
    residual: float = 0.0


def _as_payoff(models) -> PayoffUtility:
    model = stack_models(models)
    if isinstance(model, LogUtility):
        return PayoffUtility(model, 0.0)
    if isinstance(model, PayoffUtility):
        return model
    raise TypeError(f"solve_concave needs log or payoff utilities, got {type(model).__name__}")


def _vec(a, n):
    return np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()


def solve_concave(models, capacity: float, max_iter: int = 200) -> BaselineResult:
    """Maximize the summed (payoff) utility subject to ``sum(x) <= capacity``.

    Parameters
    ----------
    models : sequence of LogUtility/PayoffUtility, or one population model
    capacity : float
        Shared capacity ``C > 0``.
    max_iter : int
        Bisection steps on the dual price.

    Returns
    -------
    BaselineResult
        ``dual`` is the price ``mu`` at which marginals are equalized (0 when
        every user fits under the capacity at its own payoff maximum), and
        ``residual`` the largest KKT violation.
    """
    if not capacity > 0:
        raise ValueError("capacity must be > 0")
    model = _as_payoff(models)
    n = model.size
    cap = _vec(model.argmax(capacity), n)

    def alloc(mu):
        return np.minimum(_vec(model.inverse_deriv(mu), n), cap)

    x0 = alloc(0.0)
    if x0.sum() < capacity:
        mu = 0.0
        x = x0
    else:
        lo, hi = 0.0, float(np.max(_vec(model.deriv(0.0), n)))
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            if alloc(mid).sum() >= capacity:
                lo = mid
            else:
                hi = mid
        mu = hi
        x = alloc(hi)
    marg = _vec(model.deriv(x), n)
    at_zero = x <= 0
    at_top = (x >= capacity) & ~at_zero
    interior = ~at_zero & ~at_top
    viol = np.zeros(n)
    viol[interior] = np.abs(marg[interior] - mu)
    viol[at_zero] = np.maximum(marg[at_zero] - mu, 0.0)
    viol[at_top] = np.maximum(mu - marg[at_top], 0.0)
    return BaselineResult(x_star=x, objective=float(np.sum(model.value(x))), dual=mu,
                          residual=float(viol.max()))


def _dp(values: np.ndarray):
    """Exact maximization of ``sum_k values[k, j_k]`` subject to ``sum_k j_k <= M``.

    Ties resolve to the smallest index for the user being placed.
    """
    n, m1 = values.shape
    c = np.arange(m1)[:, None]
    j = np.arange(m1)[None, :]
    feasible = j <= c
    rest = np.where(feasible, c - j, 0)
    best = np.zeros(m1)
    choice = np.zeros((n, m1), dtype=np.int64)
    for k in range(n):
        cand = np.where(feasible, values[k][None, :] + best[rest], -np.inf)
        choice[k] = np.argmax(cand, axis=1)
        best = cand[np.arange(m1), choice[k]]
    idx = np.zeros(n, dtype=np.int64)
    budget = m1 - 1
    for k in range(n - 1, -1, -1):
        idx[k] = choice[k, budget]
        budget -= idx[k]
    return idx, float(best[m1 - 1])


def solve_sigmoidal(models, capacity: float, bins: int = 2000, refine: bool = True) -> BaselineResult:
    """Global optimum of a sum of sigmoids on a capacity grid of ``bins`` steps.

    With ``refine`` each user's share is then polished by a bounded scalar
    search within one grid step, holding the others fixed; a move is kept only
    if it raises the objective.
    """
    if bins < 100:
        raise ValueError("bins must be >= 100")
    if not capacity > 0:
        raise ValueError("capacity must be > 0")
    model = stack_models(models)
    n = model.size
    delta = capacity / bins
    grid = np.arange(bins + 1) * delta
    values = np.array([model.take(k).value(grid) for k in range(n)])
    idx, _ = _dp(values)
    x = idx * delta
    if refine:
        for k in range(n):
            u = model.take(k)
            others = x.sum() - x[k]
            lo = max(0.0, x[k] - delta)
            hi = min(x[k] + delta, capacity - others)
            if hi <= lo:
                continue
            res = minimize_scalar(lambda z: -float(u.value(z)), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            if -res.fun > float(u.value(x[k])):
                x[k] = res.x
    return BaselineResult(x_star=x, objective=float(np.sum(model.value(x))))


def _grid_search(model, capacity, axes):
    """Best feasible point of the product grid ``axes`` (one 1-D grid per user)."""
    n = len(axes)
    vals = [np.asarray(model.take(k).value(axes[k])) for k in range(n)]
    total = np.zeros(())
    load = np.zeros(())
    for k in range(n):
        shape = [1] * n
        shape[k] = -1
        total = total + vals[k].reshape(shape)
        load = load + axes[k].reshape(shape)
    total = np.where(load <= capacity * (1 + 1e-12), total, -np.inf)
    flat = int(np.argmax(total))
    pos = np.unravel_index(flat, total.shape)
    return np.array([axes[k][pos[k]] for k in range(n)]), float(total[pos])


def brute_force_oracle(models, capacity: float, grid: int = 200, refine: int = 0,
                       refine_points: int = 41) -> BaselineResult:
    """Exhaustive search over the simplex grid ``{j*C/grid}`` for ``n <= 3`` users.

    Grid feasibility is decided on integer indices, so the coarse pass is an
    exact enumeration of the same discretization the DP uses. ``refine``
    successive zooms re-grid a box of +-2 steps around the incumbent.
    """
    model = stack_models(models)
    n = model.size
    if n > 3:
        raise ValueError("brute_force_oracle supports at most 3 users")
    delta = capacity / grid
    pts = np.arange(grid + 1) * delta
    vals = [np.asarray(model.take(k).value(pts)) for k in range(n)]
    total = np.zeros(())
    load = np.zeros((), dtype=np.int64)
    for k in range(n):
        shape = [1] * n
        shape[k] = -1
        total = total + vals[k].reshape(shape)
        load = load + np.arange(grid + 1).reshape(shape)
    total = np.where(load <= grid, total, -np.inf)
    pos = np.unravel_index(int(np.argmax(total)), total.shape)
    x = np.array([pts[p] for p in pos])
    best = float(total[pos])
    step = delta
    for _ in range(refine):
        axes = [np.clip(np.linspace(x[k] - 2 * step, x[k] + 2 * step, refine_points), 0.0, capacity)
                for k in range(n)]
        cand, val = _grid_search(model, capacity, axes)
        if val > best:
            x, best = cand, val
        step = 4 * step / (refine_points - 1)
    return BaselineResult(x_star=x, objective=best)
