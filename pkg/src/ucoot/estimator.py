"""Scikit-learn style front-ends to :func:`ucoot.coot.bcd_solve`.

Co-optimal transport is transductive: ``fit(X, Y)`` aligns the rows and
columns of two given matrices, and the fitted couplings are then used to
map the source samples onto the target space or to carry labels across.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix
from .coot import SolverConfig, WarmStart, bcd_solve
from .core import Dataset
from .exceptions import DimensionError
from .transfer import barycentric_map, label_propagate

__all__ = ["UCOOT", "COOT"]


def _init(init):
    if isinstance(init, (tuple, list)):
        return WarmStart(*init)
    if init == "warm_start":
        return WarmStart()
    return init


class _BaseCOOT(BaseEstimator):
    def _config(self):
        raise NotImplementedError

    def fit(self, X, Y, sample_weight=None, feature_weight=None, target_sample_weight=None, target_feature_weight=None):
        """Compute the sample and feature couplings between ``X`` and ``Y``.

        Parameters
        ----------
        X : array-like (n1, d1)
            Source matrix.
        Y : array-like (n2, d2)
            Target matrix.
        sample_weight, feature_weight : array-like, optional
            Source row and column weights; uniform probabilities if omitted.
        target_sample_weight, target_feature_weight : array-like, optional
            Same for the target.

        Returns
        -------
        self
        """
        A = Dataset(as_matrix(X, name="X"), sample_weight, feature_weight)
        B = Dataset(as_matrix(Y, name="Y"), target_sample_weight, target_feature_weight)
        rep = bcd_solve(A, B, self._config())
        self.report_ = rep
        self.sample_coupling_ = np.array(rep.sample_plan)
        self.feature_coupling_ = np.array(rep.feature_plan)
        self.objective_ = rep.parts.unregularized
        self.n_iter_ = rep.outer_iters
        self.n_features_in_ = A.n_features
        self.target_ = np.array(B.values)
        return self

    def transform(self, X=None):
        """Barycentric projection of the fitted source samples onto the
        target space.

        ``X`` is only checked against the fitted source shape; the map is
        defined by the couplings, not by ``X``. Source samples that receive
        no mass map to zero rows.
        """
        check_is_fitted(self, "sample_coupling_")
        if X is not None:
            X = as_matrix(X, name="X")
            if X.shape != (self.sample_coupling_.shape[0], self.n_features_in_):
                raise DimensionError("transform expects the matrix passed to fit")
        return barycentric_map(self.sample_coupling_, self.target_)

    def fit_transform(self, X, Y=None, **fit_params):
        if Y is None:
            raise DimensionError("fit_transform needs a target matrix Y")
        return self.fit(X, Y, **fit_params).transform()

    def predict_labels(self, y_source):
        """Target labels by mass-weighted vote of the source labels."""
        check_is_fitted(self, "sample_coupling_")
        return np.array(label_propagate(self.sample_coupling_, y_source).labels.labels)


class UCOOT(_BaseCOOT):
    """Unbalanced co-optimal transport.

    Parameters
    ----------
    lambda1, lambda2 : float
        Marginal KL penalties on the source and target side.
    eps : float
        Entropic regularization; 0 is allowed with ``inner="nnpr"`` or
        ``"auto"``.
    inner : {"auto", "scaling", "nnpr"}
    outer_max_iter, outer_tol, inner_max_iter, inner_tol
        Iteration budgets; see :class:`~ucoot.coot.SolverConfig`.
    init : "product", "warm_start", pair of float or CouplingPair
        A pair ``(l1, l2)`` warm-starts from an unbalanced solve with those
        penalties.

    Attributes
    ----------
    sample_coupling_ : ndarray (n1, n2)
    feature_coupling_ : ndarray (d1, d2)
    objective_ : float
        Objective without the entropic term.
    report_ : SolveReport
    n_iter_ : int

    Examples
    --------
    >>> import numpy as np
    >>> X = np.random.default_rng(0).normal(size=(6, 4))
    >>> est = UCOOT(lambda1=10, lambda2=10).fit(X, X[::-1])
    >>> est.sample_coupling_.shape
    (6, 6)
    """

    def __init__(
        self,
        lambda1=1.0,
        lambda2=1.0,
        eps=1e-2,
        inner="auto",
        outer_max_iter=200,
        outer_tol=1e-6,
        inner_max_iter=1000,
        inner_tol=1e-7,
        init="product",
    ):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.eps = eps
        self.inner = inner
        self.outer_max_iter = outer_max_iter
        self.outer_tol = outer_tol
        self.inner_max_iter = inner_max_iter
        self.inner_tol = inner_tol
        self.init = init

    def _config(self):
        return SolverConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            eps=self.eps,
            inner=self.inner,
            outer_max_iter=self.outer_max_iter,
            outer_tol=self.outer_tol,
            inner_max_iter=self.inner_max_iter,
            inner_tol=self.inner_tol,
            init=_init(self.init),
        )


class COOT(_BaseCOOT):
    """Entropic co-optimal transport (hard marginal constraints).

    Same interface as :class:`UCOOT` without the penalties. ``eps`` must
    be positive and both sides must have equal sample and feature masses.
    """

    def __init__(
        self,
        eps=1e-2,
        outer_max_iter=200,
        outer_tol=1e-6,
        inner_max_iter=1000,
        inner_tol=1e-7,
        init="product",
    ):
        self.eps = eps
        self.outer_max_iter = outer_max_iter
        self.outer_tol = outer_tol
        self.inner_max_iter = inner_max_iter
        self.inner_tol = inner_tol
        self.init = init

    def _config(self):
        return SolverConfig(
            lambda1=math.inf,
            lambda2=math.inf,
            eps=self.eps,
            inner="scaling",
            outer_max_iter=self.outer_max_iter,
            outer_tol=self.outer_tol,
            inner_max_iter=self.inner_max_iter,
            inner_tol=self.inner_tol,
            init=_init(self.init),
        )
