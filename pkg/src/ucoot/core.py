"""Datasets, measures, couplings and the KL divergence layer.

All divergences here act on *unnormalized* nonnegative measures:

    KL(p | q) = sum_i p_i log(p_i / q_i) - m(p) + m(q)

with ``0 log 0 = 0`` and ``+inf`` when ``p`` is not absolutely continuous
with respect to ``q``.
"""

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from ._validation import as_matrix, as_plan, as_weights, frozen
from .exceptions import DataFormatError, DimensionError

__all__ = [
    "Dataset",
    "Measure",
    "CouplingPair",
    "Divergence",
    "kl_mass",
    "tensor_kl",
    "product_kl",
    "load_dataset",
    "read_matrix_csv",
    "write_matrix_csv",
    "read_vector",
]


class Divergence(enum.Enum):
    """Marginal divergence used by the objective."""

    KL = "kl"
    INDICATOR = "indicator"


@dataclass(frozen=True)
class Measure:
    """Nonnegative discrete measure with its cached mass."""

    weights: np.ndarray
    mass: float = field(init=False)

    def __post_init__(self):
        w = as_weights(self.weights, name="measure", require_positive_mass=False)
        object.__setattr__(self, "weights", frozen(w))
        object.__setattr__(self, "mass", float(w.sum()))

    def __len__(self):
        return self.weights.shape[0]


def _weights(p):
    if isinstance(p, Measure):
        return p.weights
    return as_weights(p, name="measure", require_positive_mass=False)


@dataclass(frozen=True)
class Dataset:
    """Dense sample-by-feature matrix with sample and feature weights.

    Weights default to uniform probability vectors and are never
    renormalized.
    """

    values: np.ndarray
    sample_weights: np.ndarray = None
    feature_weights: np.ndarray = None

    def __post_init__(self):
        X = as_matrix(self.values, name="values")
        n, d = X.shape
        ws = as_weights(self.sample_weights, n, name="sample_weights")
        wf = as_weights(self.feature_weights, d, name="feature_weights")
        object.__setattr__(self, "values", frozen(X))
        object.__setattr__(self, "sample_weights", frozen(ws))
        object.__setattr__(self, "feature_weights", frozen(wf))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]

    @property
    def sample_measure(self):
        return Measure(self.sample_weights)

    @property
    def feature_measure(self):
        return Measure(self.feature_weights)

    def transpose(self):
        """Swap the roles of samples and features."""
        return Dataset(self.values.T, self.feature_weights, self.sample_weights)

    def subset(self, rows=None, cols=None):
        """Restrict to the given row and column indices (weights kept as is)."""
        rows = np.arange(self.n_samples) if rows is None else np.asarray(rows)
        cols = np.arange(self.n_features) if cols is None else np.asarray(cols)
        return Dataset(
            self.values[np.ix_(rows, cols)],
            self.sample_weights[rows],
            self.feature_weights[cols],
        )


def _as_dataset(X):
    return X if isinstance(X, Dataset) else Dataset(X)


@dataclass(frozen=True)
class CouplingPair:
    """A sample plan and a feature plan."""

    sample_plan: np.ndarray
    feature_plan: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_plan", frozen(as_plan(self.sample_plan, name="sample_plan")))
        object.__setattr__(self, "feature_plan", frozen(as_plan(self.feature_plan, name="feature_plan")))

    @property
    def sample_mass(self):
        return float(self.sample_plan.sum())

    @property
    def feature_mass(self):
        return float(self.feature_plan.sum())

    @property
    def mass(self):
        """Common mass M; the sample mass if the pair is not equal-mass."""
        return self.sample_mass

    def equalized(self):
        """Rescale both plans to the geometric mean of their masses.

        The tensor product of the two plans, and hence every term of the
        objective, is unchanged.
        """
        ms, mf = self.sample_mass, self.feature_mass
        if ms <= 0 or mf <= 0:
            return self
        c = np.sqrt(mf / ms)
        return CouplingPair(self.sample_plan * c, self.feature_plan / c)

    def mass_gap(self):
        ms, mf = self.sample_mass, self.feature_mass
        return abs(ms - mf) / max(ms, mf, np.finfo(float).tiny)


def kl_mass(p, q):
    """Unnormalized KL divergence between two nonnegative vectors.

    Parameters
    ----------
    p, q : Measure or array-like
        Same-length nonnegative weights (any shape for arrays; they are
        compared entrywise).

    Returns
    -------
    float
        ``sum p log(p/q) - m(p) + m(q)``, or ``inf`` if ``p_i > 0`` where
        ``q_i = 0``.
    """
    p = p.weights if isinstance(p, Measure) else np.asarray(p, dtype=np.float64)
    q = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"kl_mass: shape mismatch {p.shape} vs {q.shape}")
    if np.any((p > 0) & (q <= 0)):
        return np.inf
    pos = p > 0
    ent = float(np.sum(xlogy(p[pos], p[pos]) - xlogy(p[pos], q[pos])))
    return ent - float(p.sum()) + float(q.sum())


def product_kl(kl_a, kl_b, ma, mb, mu, mv):
    """KL(a (x) b | u (x) v) from the factor divergences and masses.

    Uses ``m(b) KL(a|u) + m(a) KL(b|v) + (m(a) - m(u)) (m(b) - m(v))``.
    """
    if np.isinf(kl_a) or np.isinf(kl_b):
        # inf * 0 would be nan; a zero-mass factor zeroes the whole product
        if (np.isinf(kl_a) and mb > 0) or (np.isinf(kl_b) and ma > 0):
            return np.inf
        kl_a = 0.0 if np.isinf(kl_a) else kl_a
        kl_b = 0.0 if np.isinf(kl_b) else kl_b
    return mb * kl_a + ma * kl_b + (ma - mu) * (mb - mv)


def tensor_kl(ps1, pf1, mu_s, mu_f):
    """KL of the outer product ``ps1 (x) pf1`` against ``mu_s (x) mu_f``.

    The outer product is never materialized.
    """
    a, b = _weights(ps1), _weights(pf1)
    u, v = _weights(mu_s), _weights(mu_f)
    if a.shape != u.shape or b.shape != v.shape:
        raise DimensionError("tensor_kl: lengths must match pairwise")
    return product_kl(kl_mass(a, u), kl_mass(b, v), a.sum(), b.sum(), u.sum(), v.sum())


def read_matrix_csv(path):
    """Read a headerless comma-separated matrix, rejecting ragged rows."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if len(rows[-1]) != len(rows[0]):
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row ({len(rows[-1])} fields, expected {len(rows[0])})"
                )
    if not rows:
        raise DataFormatError(f"{path}: empty matrix")
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DataFormatError(f"{path}: non-finite entries")
    return X


def read_vector(path, dtype=float):
    """Read one value per line."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(dtype(line))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return np.array(out, dtype=np.float64 if dtype is float else np.int64)


def write_matrix_csv(path, X):
    """Write a matrix as headerless CSV with round-trip float precision."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in X:
            w.writerow([repr(float(x)) for x in row])


def load_dataset(path, sample_weights=None, feature_weights=None):
    """Load a :class:`Dataset` from CSV plus optional sidecar weight files."""
    X = read_matrix_csv(Path(path))
    ws = read_vector(sample_weights) if sample_weights is not None else None
    wf = read_vector(feature_weights) if feature_weights is not None else None
    return Dataset(X, ws, wf)
