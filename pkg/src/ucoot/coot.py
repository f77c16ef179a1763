"""Block-coordinate descent for COOT and unbalanced COOT.

The discrete objective for datasets ``A`` (n1 x d1) and ``B`` (n2 x d2) is

    sum_{ijkl} (A_ik - B_jl)^2 Ps_ij Pf_kl
      + lambda1 KL(Ps 1 (x) Pf 1 | mu1_s (x) mu1_f)
      + lambda2 KL(Ps^T 1 (x) Pf^T 1 | mu2_s (x) mu2_f)
      + eps KL(Ps (x) Pf | mu1_s (x) mu2_s (x) mu1_f (x) mu2_f)

with ``m(Ps) = m(Pf)``. Fixing one plan turns the problem into an entropic
unbalanced OT problem in the other plan (see :func:`local_uot_problem`).
Setting ``lambda1 = lambda2 = inf`` gives entropic COOT.
"""

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import xlogy

from ._validation import as_matrix, as_plan
from .core import CouplingPair, Dataset, kl_mass, product_kl, tensor_kl
from .exceptions import ConfigurationError, DegenerateProblemError, DimensionError
from .uot import UotProblem, nnpr_solve, scaling_solve

__all__ = [
    "InnerSolver",
    "Block",
    "WarmStart",
    "SolverConfig",
    "ObjectiveParts",
    "SolveReport",
    "linearized_cost",
    "local_uot_problem",
    "evaluate_objective",
    "bcd_solve",
    "warm_start_coot",
]


class InnerSolver(enum.Enum):
    SCALING = "scaling"
    NNPR = "nnpr"
    AUTO = "auto"


class Block(enum.Enum):
    """Which plan a block update optimizes."""

    SAMPLE = "sample"
    FEATURE = "feature"


@dataclass(frozen=True)
class WarmStart:
    """Initialize COOT from an unbalanced solve with these penalties."""

    lambda1: float = 100.0
    lambda2: float = 100.0


_INIT_NAMES = {"product", "product_uniform"}


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of :func:`bcd_solve`.

    ``lambda1 = lambda2 = inf`` selects COOT, which needs ``eps > 0``.
    ``init`` is ``"product"``, a :class:`~ucoot.core.CouplingPair`, or a
    :class:`WarmStart`.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    eps: float = 1e-2
    inner: InnerSolver = InnerSolver.AUTO
    outer_max_iter: int = 200
    outer_tol: float = 1e-6
    inner_max_iter: int = 1000
    inner_tol: float = 1e-7
    init: object = "product"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "eps"):
            v = float(getattr(self, name))
            if math.isnan(v) or v < 0:
                raise ConfigurationError(f"{name} must be nonnegative, got {v}")
            object.__setattr__(self, name, v)
        if math.isinf(self.eps):
            raise ConfigurationError("eps must be finite")
        try:
            object.__setattr__(self, "inner", InnerSolver(self.inner))
        except ValueError:
            raise ConfigurationError(f"unknown inner solver {self.inner!r}") from None
        if math.isinf(self.lambda1) != math.isinf(self.lambda2):
            raise ConfigurationError("semi-relaxed problems (one infinite lambda) are not supported")
        if self.is_coot and self.eps == 0:
            raise ConfigurationError("COOT mode (infinite lambdas) requires eps > 0")
        if self.is_coot and self.inner is InnerSolver.NNPR:
            raise ConfigurationError("NNPR cannot handle infinite marginal penalties")
        if self.inner is InnerSolver.SCALING and self.eps == 0:
            raise ConfigurationError("the scaling solver requires eps > 0")
        if self.outer_max_iter < 1 or self.inner_max_iter < 1:
            raise ConfigurationError("iteration budgets must be positive")
        if self.outer_tol < 0 or self.inner_tol < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        init = self.init
        if isinstance(init, str):
            if init.lower() not in _INIT_NAMES:
                raise ConfigurationError(f"unknown init {init!r}")
            object.__setattr__(self, "init", "product")
        elif isinstance(init, WarmStart):
            if math.isinf(init.lambda1) or math.isinf(init.lambda2):
                raise ConfigurationError("warm start needs finite lambdas")
        elif not isinstance(init, CouplingPair):
            raise ConfigurationError(f"unsupported init {init!r}")

    @property
    def is_coot(self):
        return math.isinf(self.lambda1) and math.isinf(self.lambda2)

    @property
    def resolved_inner(self):
        if self.inner is InnerSolver.AUTO:
            return InnerSolver.SCALING if self.eps > 0 else InnerSolver.NNPR
        return self.inner

    def to_dict(self):
        if isinstance(self.init, WarmStart):
            init = {"warm_start": [self.init.lambda1, self.init.lambda2]}
        elif isinstance(self.init, CouplingPair):
            init = "provided"
        else:
            init = self.init
        return {
            "lambda1": _json_float(self.lambda1),
            "lambda2": _json_float(self.lambda2),
            "eps": self.eps,
            "inner": self.inner.value,
            "outer_max_iter": self.outer_max_iter,
            "outer_tol": self.outer_tol,
            "inner_max_iter": self.inner_max_iter,
            "inner_tol": self.inner_tol,
            "init": init,
        }


def _json_float(x):
    return "inf" if math.isinf(x) else x


@dataclass(frozen=True)
class ObjectiveParts:
    """Objective decomposition.

    ``kl1`` and ``kl2`` are the unweighted tensor KL divergences of the two
    marginal pairs. In COOT mode they are diagnostics only: the marginal
    terms become indicators whose status is given by ``feasible`` and they
    do not enter ``total``.
    """

    transport_cost: float
    kl1: float
    kl2: float
    entropic: float
    total: float
    unregularized: float
    feasible: tuple = None

    def to_dict(self):
        d = {
            "transport_cost": self.transport_cost,
            "kl1": self.kl1,
            "kl2": self.kl2,
            "entropic": self.entropic,
            "total": self.total,
            "unregularized": self.unregularized,
        }
        if self.feasible is not None:
            d["feasible"] = list(self.feasible)
        return d


@dataclass(frozen=True)
class SolveReport:
    """Result of :func:`bcd_solve`.

    ``objective`` is the full (entropic) objective minimized by the solver;
    ``parts.unregularized`` drops the entropic term and is the value to
    compare against COOT/UCOOT theory.
    """

    couplings: CouplingPair
    objective: float
    parts: ObjectiveParts
    outer_iters: int
    converged: bool
    trace: list
    config: SolverConfig
    inner_nonconverged: int = 0
    masses: list = field(default_factory=list)

    @property
    def sample_plan(self):
        return self.couplings.sample_plan

    @property
    def feature_plan(self):
        return self.couplings.feature_plan

    @property
    def unregularized_objective(self):
        return self.parts.unregularized

    def to_dict(self):
        return {
            "objective": self.objective,
            "parts": self.parts.to_dict(),
            "mass": self.couplings.mass,
            "outer_iters": self.outer_iters,
            "converged": self.converged,
            "inner_nonconverged": self.inner_nonconverged,
            "trace": list(self.trace),
            "config": self.config.to_dict(),
        }


def _data(X, name):
    if isinstance(X, Dataset):
        return X
    return Dataset(as_matrix(X, name=name))


def linearized_cost(A, B, feature_plan):
    """Cost matrix ``sum_kl (A_ik - B_jl)^2 P_kl`` for a fixed feature plan.

    Computed as ``A^2 P 1 (+) B^2 P^T 1 - 2 A P B^T`` in O(n d^2) time.
    """
    A = A.values if isinstance(A, Dataset) else as_matrix(A, name="A")
    B = B.values if isinstance(B, Dataset) else as_matrix(B, name="B")
    P = as_plan(feature_plan, name="feature_plan")
    if P.shape != (A.shape[1], B.shape[1]):
        raise DimensionError(
            f"feature plan shape {P.shape} does not match A {A.shape} and B {B.shape}"
        )
    C = (A**2) @ P.sum(axis=1)
    C = C[:, None] + ((B**2) @ P.sum(axis=0))[None, :]
    C -= 2.0 * (A @ P @ B.T)
    return C


def _xlogx_ratio(p, q):
    # <log(p / q), p> with 0 log 0 = 0; inf if p > 0 where q = 0
    if np.any((p > 0) & (q <= 0)):
        return np.inf
    return float(np.sum(xlogy(p, p) - xlogy(p, q)))


def local_uot_problem(A, B, fixed_plan, config, which=Block.SAMPLE):
    """Build the UOT problem solved by one block update.

    Parameters
    ----------
    A, B : Dataset or array-like
    fixed_plan : array-like
        The plan held fixed: the feature plan when ``which`` is
        ``Block.SAMPLE``, the sample plan otherwise.
    config : SolverConfig
    which : Block
        The plan being updated.

    Returns
    -------
    UotProblem
        Cost ``linearized cost + lambda1 <log(F1/w1), F1> + lambda2 <log(F2/w2), F2>
        + eps <log(F/(w1 w2^T)), F>``, penalties ``lambda_k m(F)`` and entropic
        weight ``eps m(F)``, where ``F`` is the fixed plan with marginals
        ``F1``, ``F2`` and references ``w1``, ``w2``.
    """
    A, B = _data(A, "A"), _data(B, "B")
    which = Block(which)
    if which is Block.FEATURE:
        A, B = A.transpose(), B.transpose()
    F = as_plan(fixed_plan, shape=(A.n_features, B.n_features), name="fixed_plan")
    mF = float(F.sum())
    if mF <= 0:
        raise DegenerateProblemError("the fixed plan has zero mass")
    w1, w2 = A.feature_weights, B.feature_weights

    C = linearized_cost(A.values, B.values, F)
    shift = 0.0
    if not config.is_coot:
        if config.lambda1 > 0:
            shift += config.lambda1 * _xlogx_ratio(F.sum(axis=1), w1)
        if config.lambda2 > 0:
            shift += config.lambda2 * _xlogx_ratio(F.sum(axis=0), w2)
    if config.eps > 0:
        shift += config.eps * _xlogx_ratio(F, np.outer(w1, w2))
    if not np.isfinite(shift):
        raise DegenerateProblemError("the fixed plan charges atoms of zero reference weight")
    return UotProblem(
        C + shift,
        A.sample_weights,
        B.sample_weights,
        config.lambda1 * mF,
        config.lambda2 * mF,
        config.eps * mF,
    )


def _feasible(plan_marg, other_marg, u, v, tol):
    ref = np.outer(u, v)
    gap = np.abs(np.outer(plan_marg, other_marg) - ref).sum()
    return bool(gap <= tol * ref.sum())


def evaluate_objective(A, B, couplings, config, feasibility_tol=1e-4):
    """Evaluate the objective and its parts at ``couplings``.

    In COOT mode the marginal terms are indicators: ``feasible`` reports
    whether each tensor marginal matches its reference to
    ``feasibility_tol`` relative L1 error and ``total`` excludes them.
    """
    A, B = _data(A, "A"), _data(B, "B")
    Ps, Pf = couplings.sample_plan, couplings.feature_plan
    if Ps.shape != (A.n_samples, B.n_samples) or Pf.shape != (A.n_features, B.n_features):
        raise DimensionError("coupling shapes do not match the datasets")

    transport = float(np.sum(linearized_cost(A.values, B.values, Pf) * Ps))
    ps1, ps2, pf1, pf2 = Ps.sum(axis=1), Ps.sum(axis=0), Pf.sum(axis=1), Pf.sum(axis=0)
    kl1 = tensor_kl(ps1, pf1, A.sample_weights, A.feature_weights)
    kl2 = tensor_kl(ps2, pf2, B.sample_weights, B.feature_weights)

    mus = np.outer(A.sample_weights, B.sample_weights)
    muf = np.outer(A.feature_weights, B.feature_weights)
    entropic = product_kl(
        kl_mass(Ps, mus), kl_mass(Pf, muf), Ps.sum(), Pf.sum(), mus.sum(), muf.sum()
    )

    if config.is_coot:
        feasible = (
            _feasible(ps1, pf1, A.sample_weights, A.feature_weights, feasibility_tol),
            _feasible(ps2, pf2, B.sample_weights, B.feature_weights, feasibility_tol),
        )
        unreg = transport
    else:
        feasible = None
        unreg = transport
        if config.lambda1 > 0:
            unreg += config.lambda1 * kl1
        if config.lambda2 > 0:
            unreg += config.lambda2 * kl2
    total = unreg + config.eps * entropic if config.eps > 0 else unreg
    return ObjectiveParts(
        float(transport), float(kl1), float(kl2), float(entropic), float(total), float(unreg), feasible
    )


def _initial_couplings(A, B, config):
    init = config.init
    if isinstance(init, CouplingPair):
        if init.sample_plan.shape != (A.n_samples, B.n_samples) or init.feature_plan.shape != (
            A.n_features,
            B.n_features,
        ):
            raise DimensionError("initial couplings do not match the dataset shapes")
        if init.sample_mass <= 0 or init.feature_mass <= 0:
            raise DegenerateProblemError("initial couplings must have positive mass")
        return init.equalized()
    if isinstance(init, WarmStart):
        return warm_start_coot(
            A,
            B,
            (init.lambda1, init.lambda2),
            config.eps,
            inner=config.inner,
            outer_max_iter=config.outer_max_iter,
            outer_tol=config.outer_tol,
            inner_max_iter=config.inner_max_iter,
            inner_tol=config.inner_tol,
        ).equalized()
    return CouplingPair(
        np.outer(A.sample_weights, B.sample_weights),
        np.outer(A.feature_weights, B.feature_weights),
    ).equalized()


def _support(A, B):
    return (
        np.flatnonzero(A.sample_weights > 0),
        np.flatnonzero(B.sample_weights > 0),
        np.flatnonzero(A.feature_weights > 0),
        np.flatnonzero(B.feature_weights > 0),
    )


def _embed(plan, rows, cols, shape):
    out = np.zeros(shape)
    out[np.ix_(rows, cols)] = plan
    return out


def bcd_solve(A, B, config=None):
    """Solve COOT or UCOOT between two datasets by block-coordinate descent.

    Each outer iteration updates the feature plan and then the sample
    plan, each by an exact block minimization (see
    :func:`local_uot_problem`), and rescales both plans to a common mass
    after every update. The rescaling leaves the objective unchanged.
    NNPR block updates start from the current plan, so each one is a
    descent step; scaling updates start from zero potentials.

    Atoms with zero weight are removed before solving and receive zero
    mass in the returned plans.

    Parameters
    ----------
    A, B : Dataset or array-like
    config : SolverConfig, optional

    Returns
    -------
    SolveReport
    """
    config = SolverConfig() if config is None else config
    A_full, B_full = _data(A, "A"), _data(B, "B")

    if config.is_coot:
        for a, b, what in (
            (A_full.sample_weights, B_full.sample_weights, "sample"),
            (A_full.feature_weights, B_full.feature_weights, "feature"),
        ):
            if not np.isclose(a.sum(), b.sum(), rtol=1e-9):
                raise ConfigurationError(f"COOT mode needs equal {what} masses on both sides")

    init_full = _initial_couplings(A_full, B_full, config)
    rs, cs, rf, cf = _support(A_full, B_full)
    A_, B_ = A_full.subset(rs, rf), B_full.subset(cs, cf)
    pair = CouplingPair(
        init_full.sample_plan[np.ix_(rs, cs)], init_full.feature_plan[np.ix_(rf, cf)]
    ).equalized()
    if pair.sample_mass <= 0 or pair.feature_mass <= 0:
        raise DegenerateProblemError("initial couplings have no mass on the weighted support")

    inner = config.resolved_inner
    nonconverged = 0

    def update(which, current, fixed):
        nonlocal nonconverged
        prob = local_uot_problem(A_, B_, fixed, config, which)
        if inner is InnerSolver.SCALING:
            P, info = scaling_solve(prob, tol=config.inner_tol, max_iter=config.inner_max_iter, log=True)
        else:
            P, info = nnpr_solve(
                prob, tol=config.inner_tol, max_iter=config.inner_max_iter, init=current, log=True
            )
        nonconverged += not info["converged"]
        return P

    obj = evaluate_objective(A_, B_, pair, config).total
    trace = [obj]
    masses = [pair.mass]
    converged = False
    it = 0
    for it in range(1, config.outer_max_iter + 1):
        Pf = update(Block.FEATURE, pair.feature_plan, pair.sample_plan)
        pair = CouplingPair(pair.sample_plan, Pf).equalized()
        Ps = update(Block.SAMPLE, pair.sample_plan, pair.feature_plan)
        pair = CouplingPair(Ps, pair.feature_plan).equalized()
        if pair.sample_mass <= 0:
            raise DegenerateProblemError("all mass was destroyed; increase lambda1/lambda2")

        new = evaluate_objective(A_, B_, pair, config).total
        trace.append(new)
        masses.append(pair.mass)
        change = abs(obj - new)
        obj = new
        if change <= config.outer_tol * max(abs(new), np.finfo(float).tiny):
            converged = True
            break

    couplings = CouplingPair(
        _embed(pair.sample_plan, rs, cs, (A_full.n_samples, B_full.n_samples)),
        _embed(pair.feature_plan, rf, cf, (A_full.n_features, B_full.n_features)),
    )
    parts = evaluate_objective(A_full, B_full, couplings, config)
    return SolveReport(
        couplings=couplings,
        objective=parts.total,
        parts=parts,
        outer_iters=it,
        converged=converged,
        trace=trace,
        config=config,
        inner_nonconverged=nonconverged,
        masses=masses,
    )


def warm_start_coot(A, B, lambdas=(100.0, 100.0), eps=1e-2, **kwargs):
    """Unbalanced solution rescaled for use as a COOT initialization.

    Both returned plans have mass ``sqrt(m(mu1_s) m(mu1_f))``, the common
    mass of any feasible COOT pair.

    Parameters
    ----------
    A, B : Dataset or array-like
    lambdas : pair of float
        Finite marginal penalties of the unbalanced solve.
    eps : float
    **kwargs
        Other :class:`SolverConfig` fields for the unbalanced solve.
    """
    l1, l2 = (float(x) for x in lambdas)
    if math.isinf(l1) or math.isinf(l2):
        raise ConfigurationError("warm start needs finite lambdas")
    A, B = _data(A, "A"), _data(B, "B")
    cfg = SolverConfig(lambda1=l1, lambda2=l2, eps=eps, init="product", **kwargs)
    rep = bcd_solve(A, B, cfg)
    target = math.sqrt(A.sample_weights.sum() * A.feature_weights.sum())
    Ps, Pf = rep.couplings.sample_plan, rep.couplings.feature_plan
    return CouplingPair(Ps * (target / Ps.sum()), Pf * (target / Pf.sum()))


def with_overrides(config, **kwargs):
    """Copy of ``config`` with some fields replaced (re-validated)."""
    return replace(config, **{k: v for k, v in kwargs.items() if v is not None})
