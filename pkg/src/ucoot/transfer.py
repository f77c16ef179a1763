"""Using couplings downstream: barycentric projection, label propagation
and alignment metrics.

Functions that can hit an empty row or column return a boolean flag array
next to the result instead of propagating NaN.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import as_matrix, as_plan
from .exceptions import DataFormatError, DimensionError

__all__ = [
    "LabelVector",
    "Propagation",
    "barycentric_map",
    "label_propagate",
    "block_diag_accuracy",
    "foscttm",
    "class_marginal_tv",
    "read_labels",
    "write_labels",
    "metric_record",
    "write_metrics",
]


@dataclass(frozen=True)
class LabelVector:
    """Integer class labels in ``[0, K)``.

    ``K`` defaults to ``max(labels) + 1``.
    """

    labels: np.ndarray
    K: int = None

    def __post_init__(self):
        y = np.asarray(self.labels)
        if y.ndim != 1:
            raise DimensionError("labels must be a 1-d vector")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataFormatError("labels must be integers")
        y = y.astype(np.int64)
        K = int(y.max()) + 1 if self.K is None and y.size else (self.K or 0)
        if y.size and (y.min() < 0 or y.max() >= K):
            raise DataFormatError(f"labels must lie in [0, {K})")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "K", int(K))

    def __len__(self):
        return self.labels.shape[0]

    def one_hot(self):
        """``K x n`` indicator matrix."""
        D = np.zeros((self.K, len(self)))
        D[self.labels, np.arange(len(self))] = 1.0
        return D

    def proportions(self):
        if len(self) == 0:
            return np.zeros(self.K)
        return np.bincount(self.labels, minlength=self.K) / len(self)


def _labels(y, K=None):
    if isinstance(y, LabelVector):
        return y if K is None or y.K >= K else LabelVector(y.labels, K)
    return LabelVector(np.asarray(y), K)


def barycentric_map(plan, X_t, return_flags=False):
    """Project source samples onto the target space.

    Row ``i`` of the output is ``sum_j P_ij X_t[j] / sum_j P_ij``.

    Parameters
    ----------
    plan : array-like (n_s, n_t)
    X_t : array-like (n_t, d_t)
    return_flags : bool
        Also return a boolean array marking zero-mass rows, which map to
        all-zero output rows.

    Returns
    -------
    X_hat : ndarray (n_s, d_t)
    """
    P = as_plan(plan, name="plan")
    X = as_matrix(X_t, name="X_t")
    if P.shape[1] != X.shape[0]:
        raise DimensionError(f"plan has {P.shape[1]} columns but X_t has {X.shape[0]} rows")
    mass = P.sum(axis=1)
    empty = mass <= 0
    W = P / np.where(empty, 1.0, mass)[:, None]
    X_hat = W @ X
    X_hat[empty] = 0.0
    return (X_hat, empty) if return_flags else X_hat


class Propagation(NamedTuple):
    labels: LabelVector
    proportions: np.ndarray
    empty_columns: np.ndarray


def label_propagate(plan, source_labels):
    """Label each target sample with the class sending it the most mass.

    Computes ``L = D P`` where ``D`` is the one-hot encoding of the source
    labels, then ``argmax_k L_kj``. Ties go to the smallest class index;
    columns with no mass get label 0 and are flagged in
    ``empty_columns``.
    """
    P = as_plan(plan, name="plan")
    y = _labels(source_labels)
    if P.shape[0] != len(y):
        raise DimensionError(f"plan has {P.shape[0]} rows but {len(y)} source labels")
    L = y.one_hot() @ P
    # np.argmax returns the first maximum, i.e. the smallest class
    pred = np.argmax(L, axis=0) if y.K else np.zeros(P.shape[1], dtype=int)
    empty = P.sum(axis=0) <= 0
    pred = np.where(empty, 0, pred)
    return Propagation(LabelVector(pred, max(y.K, 1)), L, empty)


def block_diag_accuracy(plan, labels1, labels2, return_flag=False):
    """Fraction of plan mass on pairs sharing a label.

    A zero-mass plan scores 0; with ``return_flag`` the second output is
    True in that case.
    """
    P = as_plan(plan, name="plan")
    y1, y2 = np.asarray(_labels(labels1).labels), np.asarray(_labels(labels2).labels)
    if P.shape != (y1.size, y2.size):
        raise DimensionError(f"plan shape {P.shape} does not match label lengths ({y1.size}, {y2.size})")
    total = P.sum()
    if total <= 0:
        return (0.0, True) if return_flag else 0.0
    same = y1[:, None] == y2[None, :]
    acc = float(P[same].sum() / total)
    return (acc, False) if return_flag else acc


def foscttm(X1_aligned, X2):
    """Fraction of samples closer than the true match, averaged both ways.

    For each ``i``, counts the ``j != i`` with
    ``||X1_i - X2_j|| < ||X1_i - X2_i||`` (strictly), divides by ``n - 1``,
    and averages this with the same quantity for ``X2_i`` against the rows
    of ``X1``. Lower is better; 0 is a perfect alignment.
    """
    A = as_matrix(X1_aligned, name="X1_aligned")
    B = as_matrix(X2, name="X2")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    n = A.shape[0]
    if n < 2:
        raise DimensionError("foscttm needs at least two samples")
    D = cdist(A, B)
    true = np.diag(D)
    # the diagonal never counts because of the strict comparison
    rows = (D < true[:, None]).sum(axis=1) / (n - 1)
    cols = (D < true[None, :]).sum(axis=0) / (n - 1)
    return float((rows.mean() + cols.mean()) / 2)


def class_marginal_tv(labels_a, labels_b):
    """Total variation between the empirical class proportions."""
    a, b = _labels(labels_a), _labels(labels_b)
    K = max(a.K, b.K)
    pa, pb = _labels(a, K).proportions(), _labels(b, K).proportions()
    return float(0.5 * np.abs(pa - pb).sum())


def read_labels(path, K=None):
    """Read one integer label per line."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: not an integer label: {s!r}") from exc
    return LabelVector(np.array(out, dtype=np.int64), K)


def write_labels(path, labels):
    y = _labels(labels)
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in y.labels)


def metric_record(metric, value, n, seed=None):
    return {"metric": str(metric), "value": float(value), "n": int(n), "seed": seed}


def write_metrics(path, records):
    with open(path, "w") as fh:
        json.dump(list(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
