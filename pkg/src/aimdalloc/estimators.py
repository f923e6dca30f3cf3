"""scikit-learn style wrappers.

Each estimator is fitted on a population ``X`` of shape ``(n_users, 2)``
whose rows are ``(eta, chi)`` for log utilities or ``(eta, psi)`` for
sigmoids. Allocations are a joint property of the population, so
``predict`` returns one share per row of the population it is given.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_capacity_spec, check_positive, check_user_params
from .agents import AimdParams
from .baseline import solve_concave, solve_sigmoidal
from .engine import ScenarioConfig, UtilitySpec, run_simulation
from .game import GameConfig, nash_solve, poa
from .utility import LogUtility, PayoffUtility, PenaltyFn, SigmoidUtility

__all__ = ["AIMDAllocator", "CentralizedAllocator", "NashAllocator"]


class _AllocatorMixin:
    def fit(self, X, y=None):
        X = check_user_params(X)
        for key, value in self._solve(X).items():
            setattr(self, key, value)
        self.n_features_in_ = X.shape[1]
        self._fit_X = X
        return self

    def predict(self, X=None):
        """Allocation for population ``X`` (the fitted one when omitted)."""
        check_is_fitted(self, "allocation_")
        if X is None:
            return self.allocation_.copy()
        X = check_user_params(X)
        if X.shape == self._fit_X.shape and np.array_equal(X, self._fit_X):
            return self.allocation_.copy()
        return self._solve(X)["allocation_"]

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()


class AIMDAllocator(_AllocatorMixin, BaseEstimator):
    """Runs one of the AIMD variants on the population and keeps the long-run averages.

    Attributes set by ``fit``: ``allocation_`` (final running averages),
    ``x_final_``, ``capacity_``, ``efficiency_``, ``converged_round_``.
    """

    def __init__(self, algorithm="daimd", capacity=None, capacity_ratio=0.35, alpha=1.0, beta=0.85,
                 gamma=None, price=0.0, horizon=10_000, seed=0, daimd_semantics="as-written"):
        self.algorithm = algorithm
        self.capacity = capacity
        self.capacity_ratio = capacity_ratio
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.price = price
        self.horizon = horizon
        self.seed = seed
        self.daimd_semantics = daimd_semantics

    def _solve(self, X):
        family = "sigmoid" if self.algorithm == "qaimd" else "log"
        params = AimdParams(alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                            gamma1=self.gamma, gamma2=self.gamma, daimd_semantics=self.daimd_semantics)
        cap = check_capacity_spec(self.capacity, self.capacity_ratio, X[:, 1])
        config = ScenarioConfig(n=X.shape[0], algorithm=self.algorithm,
                                utility=UtilitySpec(family=family, users=tuple(map(tuple, X))),
                                capacity=cap, params=params, price=self.price,
                                horizon=self.horizon, seed=self.seed)
        _, s = run_simulation(config, record_trace=False)
        return {"allocation_": s.xbar, "x_final_": s.x_final, "capacity_": cap,
                "efficiency_": s.efficiency, "converged_round_": s.converged_round}

    def score(self, X=None, y=None):
        """Efficiency of the fitted run (``X`` must be omitted or the fitted population)."""
        check_is_fitted(self, "allocation_")
        if X is not None and not np.array_equal(check_user_params(X), self._fit_X):
            return self._solve(check_user_params(X))["efficiency_"]
        return self.efficiency_


class CentralizedAllocator(_AllocatorMixin, BaseEstimator):
    """Welfare-maximizing allocation: water-filling for log/payoff, DP for sigmoids."""

    def __init__(self, family="log", capacity=None, capacity_ratio=0.35, price=0.0, bins=2000):
        self.family = family
        self.capacity = capacity
        self.capacity_ratio = capacity_ratio
        self.price = price
        self.bins = bins

    def _solve(self, X):
        cap = check_capacity_spec(self.capacity, self.capacity_ratio, X[:, 1])
        if self.family == "log":
            res = solve_concave(PayoffUtility(LogUtility(X[:, 0], X[:, 1]),
                                              check_positive("price", self.price, allow_zero=True)), cap)
        elif self.family == "sigmoid":
            res = solve_sigmoidal(SigmoidUtility(X[:, 0], X[:, 1]), cap, bins=self.bins)
        else:
            raise ValueError(f"family must be 'log' or 'sigmoid', got {self.family!r}")
        return {"allocation_": res.x_star, "objective_": res.objective, "dual_": res.dual,
                "capacity_": cap}

    def score(self, X=None, y=None):
        """Optimal welfare."""
        check_is_fitted(self, "allocation_")
        return self.objective_


class NashAllocator(_AllocatorMixin, BaseEstimator):
    """Equilibrium of the penalized competition game and its price of anarchy."""

    def __init__(self, capacity=None, capacity_ratio=0.35, price=0.0, p=1, tol=1e-8, damping=0.5,
                 max_iters=10_000):
        self.capacity = capacity
        self.capacity_ratio = capacity_ratio
        self.price = price
        self.p = p
        self.tol = tol
        self.damping = damping
        self.max_iters = max_iters

    def _solve(self, X):
        cap = check_capacity_spec(self.capacity, self.capacity_ratio, X[:, 1])
        game = GameConfig(LogUtility(X[:, 0], X[:, 1]), cap, self.price, PenaltyFn(self.p, cap))
        res = nash_solve(game, tol=self.tol, max_iters=self.max_iters, damping=self.damping)
        base = solve_concave(PayoffUtility(game.models, game.price), cap)
        value = poa(game, res, base)
        return {"allocation_": res.x_ne, "poa_": value, "converged_": res.converged,
                "n_iter_": res.iterations, "residual_": res.residual, "capacity_": cap}

    def score(self, X=None, y=None):
        """Price of anarchy."""
        check_is_fitted(self, "allocation_")
        return self.poa_
