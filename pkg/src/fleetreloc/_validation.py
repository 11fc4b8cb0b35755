"""Small input-validation helpers shared across the package."""

import numbers

import numpy as np


class DataError(ValueError):
    """Input data is malformed or inconsistent (bad shapes, missing values)."""


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return value


def check_count(value, name, minimum=0):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_tensor(array, name, ndim, nonnegative=True, allow_nan=False, dtype=float):
    """Return ``array`` as a numpy array after shape and value checks."""
    arr = np.asarray(array, dtype=dtype)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    finite = np.isfinite(arr)
    if not allow_nan and not finite.all():
        raise DataError(f"{name} contains non-finite entries")
    if nonnegative and (arr[finite] < 0).any():
        raise DataError(f"{name} contains negative entries")
    return arr


def check_square_tensor(array, name, **kwargs):
    arr = check_tensor(array, name, ndim=3, **kwargs)
    if arr.shape[0] != arr.shape[1]:
        raise DataError(f"{name} must have shape (N, N, P), got {arr.shape}")
    return arr


def check_series(series, name, min_length=1):
    arr = np.asarray(series, dtype=float).ravel()
    if arr.size < min_length:
        raise ValueError(f"{name} must have at least {min_length} values, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr
