"""Input validation helpers used by the estimators and the functional API."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgumentError


def as_float_vector(x, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise InvalidArgumentError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_treatment(T, length: int | None = None) -> np.ndarray:
    """Return ``T`` as a float 0/1 vector, rejecting anything non-binary."""
    arr = as_float_vector(T, "treatment", length)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise InvalidArgumentError("treatment must be binary (0/1)")
    return arr


def check_scalar_covariates(W, n: int) -> np.ndarray:
    """Coerce ``W`` to an ``(n, q)`` matrix; ``None`` means ``q = 0``."""
    if W is None:
        return np.empty((n, 0))
    arr = np.asarray(W, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] != n:
        raise InvalidArgumentError(f"scalar covariates must have {n} rows, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("scalar covariates contain non-finite values")
    return arr


def check_open_probabilities(p, length: int) -> np.ndarray:
    arr = as_float_vector(p, "propensity", length)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise InvalidArgumentError("propensities must lie strictly inside (0, 1)")
    return arr


def check_both_arms(T: np.ndarray) -> None:
    n1 = int(T.sum())
    if n1 == 0 or n1 == T.shape[0]:
        raise InvalidArgumentError("both treatment arms must be nonempty")


def split_design(X, n_scalar: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a stacked ``[W | X(t_1) ... X(t_m)]`` matrix into its two blocks."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"X must be two-dimensional, got shape {arr.shape}")
    if not 0 <= n_scalar < arr.shape[1]:
        raise InvalidArgumentError(
            f"n_scalar={n_scalar} leaves no functional columns in X of width {arr.shape[1]}"
        )
    return arr[:, :n_scalar], arr[:, n_scalar:]
