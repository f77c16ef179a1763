"""Synthetic two-view data for the transfer experiments.

Both views come from the same label process: each class has a center in
a latent space, and a view is a fixed subset of the latent coordinates,
in a view-specific order, observed with independent noise. Samples in the
two views are independent draws, so there is no sample correspondence,
only shared classes.
"""

from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError

__all__ = ["TwoViewSample", "two_view_mixture", "append_uniform_outliers", "class_subsample"]


class TwoViewSample(NamedTuple):
    X1: np.ndarray
    y1: np.ndarray
    X2: np.ndarray
    y2: np.ndarray
    feature_map: np.ndarray


def _counts(n_per_class, n_classes):
    counts = np.broadcast_to(np.asarray(n_per_class, dtype=int), (n_classes,)).copy()
    if np.any(counts < 0) or counts.sum() == 0:
        raise ConfigurationError("class counts must be nonnegative with a positive total")
    return counts


def two_view_mixture(
    rng,
    n_classes=10,
    n_per_class=20,
    n_per_class_target=None,
    d1=12,
    d2=8,
    separation=3.0,
    noise=1.0,
):
    """Draw a labeled source view and a target view of a Gaussian mixture.

    Parameters
    ----------
    rng : numpy.random.Generator
    n_classes : int
        At least 2.
    n_per_class, n_per_class_target : int or sequence of int
        Samples per class in each view; the target defaults to the source
        counts.
    d1, d2 : int
        View dimensions. The latent dimension is ``max(d1, d2)``; view
        ``k`` observes ``d_k`` latent coordinates.
    separation : float
        Scale of the class centers.
    noise : float
        Standard deviation of the per-sample noise.

    Returns
    -------
    TwoViewSample
        ``feature_map[k]`` is the latent coordinate behind source feature
        ``k``'s counterpart in the target, or -1 where the target does not
        observe it.
    """
    if n_classes < 2:
        raise ConfigurationError("need at least two classes")
    if d1 < 1 or d2 < 1:
        raise ConfigurationError("view dimensions must be positive")
    c1 = _counts(n_per_class, n_classes)
    c2 = c1 if n_per_class_target is None else _counts(n_per_class_target, n_classes)
    D = max(d1, d2)
    centers = separation * rng.standard_normal((n_classes, D))
    cols1 = rng.permutation(D)[:d1]
    cols2 = rng.permutation(D)[:d2]

    def draw(counts, cols):
        y = np.repeat(np.arange(n_classes), counts)
        Z = centers[y] + noise * rng.standard_normal((y.size, D))
        return Z[:, cols], y

    X1, y1 = draw(c1, cols1)
    X2, y2 = draw(c2, cols2)
    where = {c: j for j, c in enumerate(cols2)}
    fmap = np.array([where.get(c, -1) for c in cols1])
    return TwoViewSample(X1, y1, X2, y2, fmap)


def append_uniform_outliers(rng, X, fraction=0.05, low=None, high=None):
    """Append ``ceil(fraction * n)`` rows with i.i.d. uniform entries.

    The range defaults to ``[min(X), max(X)]`` stretched by its width on
    both sides.

    Returns
    -------
    X_out : ndarray
    outlier_index : ndarray of int
    """
    X = np.asarray(X, dtype=np.float64)
    if not 0 <= fraction < 1:
        raise ConfigurationError("fraction must lie in [0, 1)")
    k = int(np.ceil(fraction * X.shape[0]))
    if low is None or high is None:
        lo, hi = X.min(), X.max()
        w = hi - lo
        low = lo - w if low is None else low
        high = hi + w if high is None else high
    if not low <= high:
        raise ConfigurationError("low must not exceed high")
    noise = rng.uniform(low, high, size=(k, X.shape[1]))
    n = X.shape[0]
    return np.vstack([X, noise]), np.arange(n, n + k)


def class_subsample(n_classes, n_per_class, rho, n_shifted, rng):
    """Per-class counts with ``round(rho * n_per_class)`` samples in
    ``n_shifted`` randomly chosen classes.
    """
    if not 0 < rho <= 1:
        raise ConfigurationError("rho must lie in (0, 1]")
    if not 0 <= n_shifted <= n_classes:
        raise ConfigurationError("n_shifted must lie in [0, n_classes]")
    counts = np.full(n_classes, int(n_per_class))
    shifted = rng.choice(n_classes, size=n_shifted, replace=False)
    counts[shifted] = max(1, int(round(rho * n_per_class)))
    return counts
