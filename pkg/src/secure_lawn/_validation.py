"""Exceptions and small input checks shared across modules."""

from __future__ import annotations

import math

import numpy as np
from sklearn.utils import check_array


class InputError(ValueError):
    """Invalid argument value or shape."""


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


class UsageError(RuntimeError):
    """Operation called in a state that does not allow it."""


class TrainingError(RuntimeError):
    """Non-finite loss or parameters during training."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def check_finite_scalar(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise InputError(f"{name} must be finite, got {value}")
    return value


def check_observations(X, n_features: int | None = None) -> np.ndarray:
    """2-D float64 batch of observations; a single 1-D observation is promoted."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise InputError(f"expected {n_features} features, got {X.shape[1]}")
    return X
