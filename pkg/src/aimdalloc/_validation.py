"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_user_params", "check_positive", "check_capacity_spec"]


def check_user_params(X) -> np.ndarray:
    """Validate an ``(n_users, 2)`` array of positive ``(eta, scale)`` rows."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 columns (eta, chi or psi), got {X.shape[1]}")
    if np.any(X <= 0):
        raise ValueError("utility parameters must be > 0")
    return X


def check_positive(name: str, value, allow_zero: bool = False) -> float:
    v = float(value)
    ok = v >= 0 if allow_zero else v > 0
    if not (np.isfinite(v) and ok):
        raise ValueError(f"{name} must be {'>=' if allow_zero else '>'} 0, got {value!r}")
    return v


def check_capacity_spec(capacity, capacity_ratio, scale) -> float:
    """Absolute capacity if given, else ``capacity_ratio * sum(scale)``."""
    if capacity is not None:
        return check_positive("capacity", capacity)
    return check_positive("capacity_ratio", capacity_ratio) * float(np.sum(scale))
