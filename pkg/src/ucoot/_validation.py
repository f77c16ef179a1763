"""Input validation helpers shared by the solvers and estimators."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import DataFormatError, DimensionError


def as_matrix(X, name="X", allow_empty=False):
    """Return ``X`` as a finite 2-D float64 array."""
    try:
        X = check_array(
            X,
            dtype=np.float64,
            ensure_2d=True,
            ensure_min_samples=0 if allow_empty else 1,
            ensure_min_features=0 if allow_empty else 1,
            ensure_all_finite=False,
        )
    except ValueError as exc:
        raise DimensionError(f"{name}: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise DataFormatError(f"{name}: entries must be finite")
    return X


def as_weights(w, length=None, name="weights", require_positive_mass=True):
    """Return ``w`` as a finite, nonnegative 1-D float64 array.

    Parameters
    ----------
    w : array-like or None
        Weights. ``None`` means uniform weights summing to one, which
        requires ``length``.
    length : int, optional
        Expected length.
    """
    if w is None:
        if length is None:
            raise DimensionError(f"{name}: length required for default weights")
        return np.full(length, 1.0 / length)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise DimensionError(f"{name}: expected a 1-D vector, got shape {w.shape}")
    if length is not None and w.shape[0] != length:
        raise DimensionError(f"{name}: expected length {length}, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise DataFormatError(f"{name}: weights must be finite")
    if np.any(w < 0):
        raise DataFormatError(f"{name}: weights must be nonnegative")
    if require_positive_mass and not np.any(w > 0):
        raise DataFormatError(f"{name}: at least one weight must be positive")
    return w


def as_plan(P, shape=None, name="plan"):
    """Return ``P`` as a finite nonnegative 2-D float64 array."""
    P = as_matrix(P, name=name)
    if shape is not None and P.shape != tuple(shape):
        raise DimensionError(f"{name}: expected shape {tuple(shape)}, got {P.shape}")
    if np.any(P < 0):
        raise DataFormatError(f"{name}: entries must be nonnegative")
    return P


def frozen(a):
    """Read-only copy of an array."""
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a
