"""Utility, payoff and penalty functions.

Every model is an immutable value whose parameters may be scalars or equal
length arrays. An array-valued model describes a whole population (one entry
per user) and evaluates elementwise, which is how the simulator and solvers
consume them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import expit

ArrayLike = Union[float, np.ndarray]

__all__ = [
    "LogUtility",
    "PayoffUtility",
    "SigmoidUtility",
    "StepUtility",
    "PenaltyFn",
    "UnsupportedModelError",
    "DomainError",
    "stack_models",
]


class UnsupportedModelError(TypeError):
    """Raised when an operation is not defined for a utility family."""


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


def _param(name: str, value, *, strict: bool = True) -> ArrayLike:
    arr = np.asarray(value, dtype=float)
    bad = ~np.isfinite(arr) | ((arr <= 0) if strict else (arr < 0))
    if np.any(bad):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return float(arr) if arr.ndim == 0 else arr


def _out(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


class _Model:
    def __call__(self, x):
        return self.value(x)

    @property
    def size(self) -> int:
        """Number of users described (1 for scalar parameters)."""
        return int(np.size(self._first()))

    def take(self, i: int):
        """Return the scalar model of user ``i`` from a population model."""
        raise NotImplementedError

    def _first(self):
        raise NotImplementedError


@dataclass(frozen=True)
class LogUtility(_Model):
    """Normalized logarithmic utility.

    ``u(x) = 100 * log(1 + eta*x) / log(1 + eta*chi)``, so ``u(0) = 0`` and
    ``u(chi) = 100``.

    Parameters
    ----------
    eta : float or ndarray
        Urgency parameter, > 0.
    chi : float or ndarray
        Allocation giving 100 units of utility, > 0.
    """

    eta: ArrayLike
    chi: ArrayLike

    def __post_init__(self):
        object.__setattr__(self, "eta", _param("eta", self.eta))
        object.__setattr__(self, "chi", _param("chi", self.chi))
        np.broadcast(self.eta, self.chi)

    def _first(self):
        return np.broadcast_to(self.eta, np.broadcast(self.eta, self.chi).shape)

    @property
    def _norm(self):
        return np.log1p(self.eta * self.chi)

    def value(self, x):
        return _out(100.0 * np.log1p(self.eta * np.asarray(x, dtype=float)) / self._norm)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return _out(100.0 * self.eta / ((1.0 + self.eta * x) * self._norm))

    def inverse_deriv(self, mu):
        """Allocation at which the marginal utility equals ``mu`` (``inf`` at 0)."""
        mu = np.asarray(mu, dtype=float)
        with np.errstate(divide="ignore"):
            x = (100.0 * self.eta / (mu * self._norm) - 1.0) / self.eta
        return _out(np.maximum(x, 0.0))

    def take(self, i: int) -> "LogUtility":
        shape = (self.size,)
        return LogUtility(
            float(np.broadcast_to(self.eta, shape)[i]),
            float(np.broadcast_to(self.chi, shape)[i]),
        )


@dataclass(frozen=True)
class PayoffUtility(_Model):
    """Utility minus a linear cost: ``v(x) = u(x) - price*x``."""

    base: LogUtility
    price: float = 0.0

    def __post_init__(self):
        if not isinstance(self.base, LogUtility):
            raise TypeError("PayoffUtility wraps a LogUtility")
        object.__setattr__(self, "price", _param("price", self.price, strict=False))

    def _first(self):
        return self.base._first()

    def value(self, x):
        return _out(self.base.value(x) - self.price * np.asarray(x, dtype=float))

    def deriv(self, x):
        return _out(self.base.deriv(x) - self.price)

    def inverse_deriv(self, mu):
        return self.base.inverse_deriv(np.asarray(mu, dtype=float) + self.price)

    def argmax(self, cap):
        """Maximizer of the payoff over ``[0, cap]`` (closed form)."""
        price = np.asarray(self.price, dtype=float)
        # zero price: payoff strictly increasing, maximum at the upper bound
        x = np.where(price > 0, self.base.inverse_deriv(np.where(price > 0, price, 1.0)), np.inf)
        return _out(np.clip(x, 0.0, cap))

    def take(self, i: int) -> "PayoffUtility":
        return PayoffUtility(self.base.take(i), float(np.broadcast_to(self.price, (self.size,))[i]))


@dataclass(frozen=True)
class SigmoidUtility(_Model):
    """Sigmoidal utility shifted so that ``w(0) = 0``.

    ``w(x) = 100/(1 + exp(-eta*(x - psi))) - 100/(1 + exp(eta*psi))``

    Convex below the inflection point ``psi`` and concave above it.
    """

    eta: ArrayLike
    psi: ArrayLike

    def __post_init__(self):
        object.__setattr__(self, "eta", _param("eta", self.eta))
        object.__setattr__(self, "psi", _param("psi", self.psi))
        np.broadcast(self.eta, self.psi)

    def _first(self):
        return np.broadcast_to(self.eta, np.broadcast(self.eta, self.psi).shape)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return _out(100.0 * (expit(self.eta * (x - self.psi)) - expit(-self.eta * self.psi)))

    def deriv(self, x):
        s = expit(self.eta * (np.asarray(x, dtype=float) - self.psi))
        return _out(100.0 * self.eta * s * (1.0 - s))

    def take(self, i: int) -> "SigmoidUtility":
        shape = (self.size,)
        return SigmoidUtility(
            float(np.broadcast_to(self.eta, shape)[i]),
            float(np.broadcast_to(self.psi, shape)[i]),
        )


@dataclass(frozen=True)
class StepUtility(_Model):
    """All-or-nothing utility: 0 below ``theta``, 100 from ``theta`` on.

    Evaluation only; algorithms use a sigmoid approximation instead.
    """

    theta: ArrayLike

    def __post_init__(self):
        object.__setattr__(self, "theta", _param("theta", self.theta))

    def _first(self):
        return self.theta

    def value(self, x):
        return _out(np.where(np.asarray(x, dtype=float) >= self.theta, 100.0, 0.0))

    def deriv(self, x):
        raise UnsupportedModelError("StepUtility is not differentiable")

    def take(self, i: int) -> "StepUtility":
        return StepUtility(float(np.broadcast_to(self.theta, (self.size,))[i]))


@dataclass(frozen=True)
class PenaltyFn:
    """Concave congestion penalty ``tau(z) = sqrt(1 - z**p / C**p)`` on ``[0, C]``."""

    p: int
    capacity: float

    # relative slack tolerated above C, absorbs rounding in sums of allocations
    _SLACK = 1e-12

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p!r}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "capacity", _param("capacity", self.capacity))

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0) or np.any(z > self.capacity * (1 + self._SLACK)):
            raise DomainError(f"penalty argument outside [0, {self.capacity}]: {z}")
        return np.minimum(z / self.capacity, 1.0)

    def __call__(self, z):
        r = self._check(z)
        return _out(np.sqrt(1.0 - r**self.p))

    def deriv(self, z):
        """Derivative in ``z``; ``-inf`` at ``z = C``."""
        r = self._check(z)
        tau = np.sqrt(1.0 - r**self.p)
        with np.errstate(divide="ignore"):
            d = -self.p * r ** (self.p - 1) / (2.0 * self.capacity * tau)
        return _out(d)


def stack_models(models: Sequence) -> _Model:
    """Merge a list of scalar models of one family into a population model.

    A model that is already array-valued is returned unchanged.
    """
    if isinstance(models, _Model):
        return models
    models = list(models)
    if not models:
        raise ValueError("at least one model required")
    kind = type(models[0])
    if any(type(m) is not kind for m in models):
        raise TypeError("all models must belong to the same family")
    col = lambda attr, ms=models: np.array([float(getattr(m, attr)) for m in ms])
    if kind is LogUtility:
        return LogUtility(col("eta"), col("chi"))
    if kind is SigmoidUtility:
        return SigmoidUtility(col("eta"), col("psi"))
    if kind is StepUtility:
        return StepUtility(col("theta"))
    if kind is PayoffUtility:
        base = stack_models([m.base for m in models])
        prices = col("price")
        price = float(prices[0]) if np.all(prices == prices[0]) else prices
        return PayoffUtility(base, price)
    raise TypeError(f"cannot stack {kind.__name__}")
