"""Centered statistics, variance estimates, bias terms and studentized pivots.

Pivot kinds, with the bootstrap that mimics them:

========  ==========================================  ============
kind      original pivot                              bootstrap
========  ==========================================  ============
R         T / sigma_hat                               residual
Rcheck    sigma_check^-1 Sigma_hat^-1/2 T             perturbation
Rbreve    (T - b_lasso) / sigma_hat                   residual
Rtilde    sigma_check^-1 Sigma_hat^-1/2 (T - b_lasso) perturbation
Rdot      (T + b_breve) / sigma_hat                   residual
Rddot     sigma_check^-1 Sigma_hat^-1/2 (T + b_breve) perturbation
========  ==========================================  ============

Perturbation bootstrap pivots whiten with ``sigma_check Sigma_tilde^-1/2``
and divide by sigma** instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    AdaptiveLasso,
    ContrastMatrix,
    Fit,
    Lasso,
    OneStep,
    RegressionProblem,
    estimator_class,
    gram_partition,
)
from .penalties import InfiniteWeightError
from .solvers import SingularDesignError, class2_weights

RESIDUAL_KINDS = ("R", "Rbreve", "Rdot")
PERTURBATION_KINDS = ("Rcheck", "Rtilde", "Rddot")
KINDS = RESIDUAL_KINDS + PERTURBATION_KINDS
LASSO_KINDS = ("Rbreve", "Rtilde")
CLASS2_KINDS = ("Rdot", "Rddot")
EIG_FLOOR = 1e-12


class PivotError(ValueError):
    pass


def _D(D) -> np.ndarray:
    return D.matrix if isinstance(D, ContrastMatrix) else np.atleast_2d(np.asarray(D, dtype=float))


def inv_sqrt(S) -> np.ndarray:
    """Symmetric inverse square root by eigendecomposition."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    top = vals[-1] if vals.size else 0.0
    if not top > 0 or vals[0] <= EIG_FLOOR * top:
        raise PivotError(f"matrix is not positive definite (eigenvalues {vals[0]:.3e} .. {top:.3e})")
    return (vecs / np.sqrt(vals)) @ vecs.T


def t_statistic(fit: Fit, beta_ref, D) -> np.ndarray:
    """sqrt(n) D (beta_hat - beta_ref)."""
    return np.sqrt(fit.n) * (_D(D) @ (fit.beta - np.asarray(beta_ref, dtype=float)))


def _c11_inverse(problem, active):
    C11 = gram_partition(problem, active)[0]
    vals = np.linalg.eigvalsh(C11) if C11.size else np.array([0.0])
    if not vals[0] > EIG_FLOOR * max(vals[-1], 1e-300):
        raise SingularDesignError(float(vals[0]), active)
    return np.linalg.inv(C11)


def xi_matrix(problem: RegressionProblem, active, D) -> np.ndarray:
    """Rows xi_i = D_A C11^-1 x_{i,A}, shape (n, q)."""
    active = np.unique(np.asarray(active, dtype=np.int64))
    if active.size == 0:
        raise PivotError("empty active set")
    Dm = _D(D)
    return problem.design[:, active] @ _c11_inverse(problem, active) @ Dm[:, active].T


def _active_map(problem, active, D):
    # D_A C11^-1 for the given active set
    Dm = _D(D)
    return Dm[:, active] @ _c11_inverse(problem, active)


def bias_lasso(fit: Fit, problem: RegressionProblem, D, lam: float) -> np.ndarray:
    """-lam / (2 sqrt n) D_A C11^-1 sgn(beta_A)."""
    A = fit.active_set
    if A.size == 0:
        raise PivotError("Lasso bias is undefined for an empty active set")
    return -lam / (2 * np.sqrt(fit.n)) * (_active_map(problem, A, D) @ np.sign(fit.beta[A]))


def coordinate_derivatives(spec, initial_beta) -> np.ndarray:
    """P'_j(|initial_j|) per coordinate, on the objective's per-observation scale."""
    if not isinstance(spec, (AdaptiveLasso, OneStep)):
        raise TypeError("class-II bias needs an adaptive or one-step spec")
    w, bad = class2_weights(spec, np.asarray(initial_beta, dtype=float)[None, :], screen_zeros=True)
    return w[0]


def bias_class2(fit: Fit, problem: RegressionProblem, D, spec, initial_beta) -> np.ndarray:
    """D_A C11^-1 s with s_j = sqrt(n) P'(|initial_j|) sgn(beta_j) on the active set."""
    A = fit.active_set
    if A.size == 0:
        return np.zeros(_D(D).shape[0])
    w = coordinate_derivatives(spec, initial_beta)[A]
    if not np.all(np.isfinite(w)):
        raise InfiniteWeightError(int(A[np.flatnonzero(~np.isfinite(w))[0]]))
    s = np.sqrt(fit.n) * w * np.sign(fit.beta[A])
    return _active_map(problem, A, D) @ s


@dataclass(frozen=True, eq=False)
class PivotBundle:
    """Original-data quantities shared by all pivots of one fit and contrast."""

    t_n: Optional[np.ndarray]
    sigma_hat_sq: float
    sigma_check_sq: float
    Sigma_hat: np.ndarray
    Sigma_tilde: np.ndarray
    bias: Optional[np.ndarray]
    class_tag: str
    xi: np.ndarray
    residuals: np.ndarray
    theta_hat: np.ndarray
    n: int

    @property
    def q(self) -> int:
        return self.theta_hat.shape[0]


def pivot_bundle(fit: Fit, problem: RegressionProblem, D, class_tag: Optional[str] = None,
                 beta_ref=None, spec=None, initial_beta=None) -> PivotBundle:
    """Variance estimates and bias for ``fit``.

    The bias is the Lasso term for class III and the initial-estimator term
    for class II (both need ``spec``); class I carries none.
    """
    spec = spec if spec is not None else fit.penalty
    if class_tag is None:
        if spec is None:
            raise PivotError("class_tag or spec is required")
        class_tag = estimator_class(spec)
    if class_tag not in ("I", "II", "III"):
        raise PivotError(f"unknown class {class_tag!r}")
    A = fit.active_set
    e = np.asarray(fit.residuals, dtype=float)
    xi = xi_matrix(problem, A, D)
    Sigma_hat = xi.T @ xi / fit.n
    Sigma_tilde = (xi * e[:, None] ** 2).T @ xi / fit.n
    bias = None
    if class_tag == "III" and isinstance(spec, Lasso):
        bias = bias_lasso(fit, problem, D, spec.lam)
    elif class_tag == "II" and spec is not None:
        init = initial_beta if initial_beta is not None else fit.initial_beta
        if init is None:
            raise PivotError("class-II bias needs the initial estimate")
        bias = bias_class2(fit, problem, D, spec, init)
    return PivotBundle(
        t_n=None if beta_ref is None else t_statistic(fit, beta_ref, D),
        sigma_hat_sq=float(np.mean((e - e.mean()) ** 2)),
        sigma_check_sq=float(np.mean(e**2)),
        Sigma_hat=0.5 * (Sigma_hat + Sigma_hat.T),
        Sigma_tilde=0.5 * (Sigma_tilde + Sigma_tilde.T),
        bias=bias,
        class_tag=class_tag,
        xi=xi,
        residuals=e,
        theta_hat=_D(D) @ fit.beta,
        n=fit.n,
    )


def _check_kind(bundle, kind):
    if kind not in KINDS:
        raise PivotError(f"unknown pivot kind {kind!r}; choose from {KINDS}")
    if kind in LASSO_KINDS and bundle.class_tag != "III":
        raise PivotError(f"{kind} is the Lasso bias-corrected pivot; bundle is class {bundle.class_tag}")
    if kind in CLASS2_KINDS and bundle.class_tag != "II":
        raise PivotError(f"{kind} is the class-II bias-corrected pivot; bundle is class {bundle.class_tag}")
    if kind in LASSO_KINDS + CLASS2_KINDS and bundle.bias is None:
        raise PivotError(f"{kind} needs a bias term in the bundle")


def shifted(bundle: PivotBundle, kind: str, t) -> np.ndarray:
    """T shifted by the kind's bias convention: T - b (Lasso), T + b (class II), T otherwise."""
    if kind in LASSO_KINDS:
        return t - bundle.bias
    if kind in CLASS2_KINDS:
        return t + bundle.bias
    return t


def studentize(bundle: PivotBundle, kind: str, t=None) -> np.ndarray:
    """Original-data pivot of ``kind`` for statistic ``t`` (default ``bundle.t_n``)."""
    _check_kind(bundle, kind)
    t = bundle.t_n if t is None else np.asarray(t, dtype=float)
    if t is None:
        raise PivotError("no T_n: pass t or build the bundle with beta_ref")
    u = shifted(bundle, kind, t)
    if kind in RESIDUAL_KINDS:
        if not bundle.sigma_hat_sq > 0:
            raise PivotError("sigma_hat is zero")
        return u / np.sqrt(bundle.sigma_hat_sq)
    if not bundle.sigma_check_sq > 0:
        raise PivotError("sigma_check is zero")
    return inv_sqrt(bundle.Sigma_hat) @ u / np.sqrt(bundle.sigma_check_sq)


def _replicate_bias(problem, D, spec, beta, initial, n):
    # class-II bias recomputed from a replicate's own active set and initial estimate
    A = np.flatnonzero(beta)
    if A.size == 0:
        return np.zeros(_D(D).shape[0])
    w = coordinate_derivatives(spec, initial)[A]
    return _active_map(problem, A, D) @ (np.sqrt(n) * w * np.sign(beta[A]))


def bootstrap_pivots(run, fit: Fit, problem: RegressionProblem, D, kind: str, bundle: PivotBundle, spec=None):
    """Pivots of every valid replicate in ``run``.

    Returns ``(pivots, mask)``: ``pivots`` has one row per replicate where
    ``mask`` is True (status OK and positive scale).
    """
    _check_kind(bundle, kind)
    is_pert = getattr(run.method, "name", "") == "perturbation"
    if is_pert != (kind in PERTURBATION_KINDS):
        raise PivotError(f"pivot {kind} does not match a {run.method.name} bootstrap run")
    mask = run.ok & (run.scales > 0)
    betas = run.betas[mask]
    T = np.sqrt(fit.n) * (betas - fit.beta) @ _D(D).T
    if kind in LASSO_KINDS:
        T = T - bundle.bias
    elif kind in CLASS2_KINDS:
        spec = spec if spec is not None else fit.penalty
        if run.initials is None:
            raise PivotError("class-II bootstrap pivots need replicate initial estimates")
        inits = run.initials[mask]
        T = T + np.array([_replicate_bias(problem, D, spec, b, i, fit.n) for b, i in zip(betas, inits)]).reshape(T.shape)
    scales = run.scales[mask][:, None]
    if kind in RESIDUAL_KINDS:
        return T / scales, mask
    W = np.sqrt(bundle.sigma_check_sq) * inv_sqrt(bundle.Sigma_tilde)
    return (T @ W.T) / scales, mask


def bootstrap_pivot(replicate, fit: Fit, problem: RegressionProblem, D, kind: str, bundle: PivotBundle,
                    spec=None) -> np.ndarray:
    """Pivot of one replicate record (see :func:`bootstrap_pivots`)."""
    _check_kind(bundle, kind)
    if not replicate.scale > 0:
        raise PivotError(f"replicate {replicate.index} has zero scale")
    t = np.sqrt(fit.n) * (_D(D) @ (replicate.beta - fit.beta))
    if kind in LASSO_KINDS:
        t = t - bundle.bias
    elif kind in CLASS2_KINDS:
        t = t + _replicate_bias(problem, D, spec if spec is not None else fit.penalty, replicate.beta,
                                replicate.initial, fit.n)
    if kind in RESIDUAL_KINDS:
        return t / replicate.scale
    return np.sqrt(bundle.sigma_check_sq) * (inv_sqrt(bundle.Sigma_tilde) @ t) / replicate.scale
