"""Unbalanced optimal transport solvers.

Both solvers target

    min_{P >= 0} <C, P> + rho1 KL(P 1 | mu) + rho2 KL(P^T 1 | nu) + eps KL(P | mu (x) nu)

The scaling solver runs generalized Sinkhorn iterations on log-domain
potentials and needs ``eps > 0``. It accepts ``rho = inf`` (balanced
marginal). The NNPR solver is a multiplicative majorization-minimization
update on the plan, valid for ``eps >= 0`` but finite ``rho`` only.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_plan, as_weights
from .core import kl_mass
from .exceptions import ConfigurationError, ConvergenceWarning, DegenerateProblemError, DimensionError

__all__ = ["UotProblem", "scaling_solve", "nnpr_solve", "uot_objective"]


@dataclass(frozen=True)
class UotProblem:
    """An entropic unbalanced OT problem.

    ``mu`` and ``nu`` must be strictly positive; zero-weight atoms are the
    caller's job to prune.
    """

    cost: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    rho1: float
    rho2: float
    eps: float

    def __post_init__(self):
        C = as_matrix(self.cost, name="cost")
        mu = as_weights(self.mu, C.shape[0], name="mu")
        nu = as_weights(self.nu, C.shape[1], name="nu")
        if np.any(mu <= 0) or np.any(nu <= 0):
            raise DegenerateProblemError("mu and nu must be strictly positive (prune zero-weight atoms)")
        for name in ("rho1", "rho2", "eps"):
            v = float(getattr(self, name))
            if math.isnan(v) or v < 0:
                raise ConfigurationError(f"{name} must be nonnegative, got {v}")
            object.__setattr__(self, name, v)
        if math.isinf(self.eps):
            raise ConfigurationError("eps must be finite")
        if (math.isinf(self.rho1) or math.isinf(self.rho2)) and self.eps == 0:
            raise ConfigurationError("an infinite marginal penalty requires eps > 0")
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    @property
    def shape(self):
        return self.cost.shape


def _logsumexp(a, axis):
    # max-stabilized; rows that are entirely -inf reduce to -inf
    amax = a.max(axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - amax).sum(axis=axis))
    return out + np.squeeze(amax, axis=axis)


def _exponent(rho, eps):
    if math.isinf(rho):
        return 1.0
    return rho / (rho + eps)


def scaling_solve(prob, tol=1e-7, max_iter=1000, init=None, translation=True, log=False):
    """Solve an entropic UOT problem with the log-domain scaling algorithm.

    Parameters
    ----------
    prob : UotProblem
        Requires ``prob.eps > 0``.
    tol : float
        Stop when the sup-norm change of both potentials is below ``tol``.
    max_iter : int
        Maximum number of (f, g) sweeps.
    init : tuple of arrays, optional
        Starting log-potentials ``(f, g)``; zeros by default.
    translation : bool
        After each sweep, move the potentials along ``(f + t, g - t)`` by
        the exact maximizing ``t`` of the dual. The fixed point is unchanged;
        convergence no longer stalls when ``rho >> eps``. Only used when
        both penalties are finite and positive.
    log : bool
        If True, also return a dict with the potentials, iteration count,
        final error and a ``converged`` flag. Without ``log``,
        non-convergence emits a :class:`ConvergenceWarning`.

    Returns
    -------
    P : ndarray (m, n)
        ``(mu (x) nu) * exp(f (+) g - C / eps)``.
    """
    if prob.eps <= 0:
        raise ConfigurationError("scaling_solve requires eps > 0")
    m, n = prob.shape
    logmu, lognu = np.log(prob.mu), np.log(prob.nu)
    k1, k2 = _exponent(prob.rho1, prob.eps), _exponent(prob.rho2, prob.eps)
    # row kernel includes log nu, column kernel includes log mu
    Kr = lognu[None, :] - prob.cost / prob.eps
    Kc = logmu[:, None] - prob.cost / prob.eps

    if init is None:
        f, g = np.zeros(m), np.zeros(n)
    else:
        f = np.array(init[0], dtype=np.float64)
        g = np.array(init[1], dtype=np.float64)
        if f.shape != (m,) or g.shape != (n,):
            raise DimensionError("init potentials do not match the cost shape")

    translate = translation and 0 < prob.rho1 < np.inf and 0 < prob.rho2 < np.inf
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f_new = -k1 * _logsumexp(Kr + g[None, :], axis=1)
        g_new = -k2 * _logsumexp(Kc + f_new[:, None], axis=0)
        if translate:
            # exact dual ascent along (f + t, g - t), the near-flat direction
            # when rho >> eps
            la = _logsumexp(logmu - prob.eps * f_new / prob.rho1, axis=0)
            lb = _logsumexp(lognu - prob.eps * g_new / prob.rho2, axis=0)
            t = (la - lb) * prob.rho1 * prob.rho2 / ((prob.rho1 + prob.rho2) * prob.eps)
            f_new = f_new + t
            g_new = g_new - t
        err = max(np.max(np.abs(f_new - f)), np.max(np.abs(g_new - g)))
        f, g = f_new, g_new
        if not np.isfinite(err):
            break
        if err <= tol:
            break
    converged = bool(err <= tol)

    P = np.exp(logmu[:, None] + lognu[None, :] + f[:, None] + g[None, :] - prob.cost / prob.eps)
    if log:
        return P, {"f": f, "g": g, "n_iter": it, "err": float(err), "converged": converged}
    if not converged:
        warnings.warn(
            f"scaling_solve did not converge in {max_iter} iterations (err={err:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return P


def _masked_scale(coef, logx):
    # coef * log x with 0 * (-inf) treated as 0
    if coef == 0:
        return np.zeros_like(logx)
    return coef * logx


def nnpr_solve(prob, tol=1e-7, max_iter=1000, init=None, log=False):
    """Solve a UOT problem with finite penalties by multiplicative updates.

    Iterates

        P <- P^(l1 + l2) / (P_1^l1 (x) P_2^l2) * (mu^(l1 + r) (x) nu^(l2 + r)) * exp(-C / lam)

    with ``lam = rho1 + rho2 + eps``, ``l_k = rho_k / lam`` and
    ``r = eps / lam``. The update is carried out on ``log P``. Entries at
    exactly zero stay at zero.

    Parameters
    ----------
    prob : UotProblem
        Requires finite ``rho1`` and ``rho2``.
    tol : float
        Stop when the sup-norm change of the plan is below ``tol``.
    max_iter : int
    init : array-like (m, n), optional
        Nonnegative starting plan with positive mass. Defaults to
        ``mu (x) nu / sqrt(m(mu) m(nu))``.
    log : bool
        As in :func:`scaling_solve`.
    """
    if math.isinf(prob.rho1) or math.isinf(prob.rho2):
        raise ConfigurationError("nnpr_solve requires finite rho1 and rho2")
    lam = prob.rho1 + prob.rho2 + prob.eps
    if lam <= 0:
        raise ConfigurationError("nnpr_solve requires rho1 + rho2 + eps > 0")
    l1, l2, r = prob.rho1 / lam, prob.rho2 / lam, prob.eps / lam
    m, n = prob.shape
    logmu, lognu = np.log(prob.mu), np.log(prob.nu)
    logK = (l1 + r) * logmu[:, None] + (l2 + r) * lognu[None, :] - prob.cost / lam

    if init is None:
        logP = logmu[:, None] + lognu[None, :] - 0.5 * (np.log(prob.mu.sum()) + np.log(prob.nu.sum()))
    else:
        P0 = as_plan(init, shape=(m, n), name="init")
        if not np.any(P0 > 0):
            raise DegenerateProblemError("nnpr_solve: initial plan must have positive entries")
        with np.errstate(divide="ignore"):
            logP = np.log(P0)

    P = np.exp(logP)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            lp1 = _logsumexp(logP, axis=1)
            lp2 = _logsumexp(logP, axis=0)
            new = (
                _masked_scale(l1 + l2, logP)
                - _masked_scale(l1, lp1)[:, None]
                - _masked_scale(l2, lp2)[None, :]
                + logK
            )
        if l1 + l2 > 0:
            new = np.where(np.isneginf(logP), -np.inf, new)
        P_new = np.exp(new)
        err = float(np.max(np.abs(P_new - P)))
        logP, P = new, P_new
        if not np.isfinite(err) or err <= tol:
            break
    converged = bool(err <= tol)
    if log:
        return P, {"n_iter": it, "err": err, "converged": converged}
    if not converged:
        warnings.warn(
            f"nnpr_solve did not converge in {max_iter} iterations (err={err:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return P


def _penalty(rho, p, q, rtol=1e-6):
    if rho == 0:
        return 0.0
    if math.isinf(rho):
        ok = np.allclose(p, q, rtol=rtol, atol=rtol * q.sum())
        return 0.0 if ok else np.inf
    return rho * kl_mass(p, q)


def uot_objective(prob, P):
    """Evaluate the UOT objective of ``prob`` at plan ``P``.

    Infinite penalties act as an indicator: 0 when the marginal matches
    (to 1e-6 relative tolerance), ``inf`` otherwise.
    """
    P = as_plan(P, shape=prob.shape)
    val = float(np.sum(prob.cost * P))
    val += _penalty(prob.rho1, P.sum(axis=1), prob.mu)
    val += _penalty(prob.rho2, P.sum(axis=0), prob.nu)
    if prob.eps > 0:
        val += prob.eps * kl_mass(P, np.outer(prob.mu, prob.nu))
    return val
