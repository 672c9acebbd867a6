"""Penalized least squares by coordinate descent, OLS and KKT checks.

Every solver works on the Gram form, so many responses sharing one design
(bootstrap replicates, Monte Carlo repetitions) are solved in one batch call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .model import (
    MCP,
    SCAD,
    ZERO_TOL,
    AdaptiveLasso,
    Fit,
    Lasso,
    LassoInit,
    MCPBase,
    OLSInit,
    OneStep,
    PostSelectionOLS,
    RegressionProblem,
    SCADBase,
    gram_partition,
)
from .penalties import InfiniteWeightError, base_derivative, mcp_derivative, scad_derivative

OK, NOT_CONVERGED, INFINITE_WEIGHT, SINGULAR = 0, 1, 2, 3
INITIAL_ZERO_TOL = 1e-8


class SingularDesignError(ValueError):
    def __init__(self, min_eig, support=None):
        self.min_eig = min_eig
        self.support = support
        super().__init__(f"Gram block is singular (smallest eigenvalue {min_eig:.3e})")


class ConvergenceError(RuntimeError):
    def __init__(self, beta, kkt, iterations):
        self.beta = beta
        self.kkt = kkt
        self.iterations = iterations
        super().__init__(f"coordinate descent did not converge in {iterations} sweeps (KKT residual {kkt:.3e})")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100_000
    coord_tol: float = 1e-10
    kkt_tol: float = 1e-8
    zero_tol: float = ZERO_TOL

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.coord_tol, self.kkt_tol, self.zero_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class BatchSolution:
    betas: np.ndarray
    sweeps: np.ndarray
    status: np.ndarray
    initial: Optional[np.ndarray] = None
    notes: tuple = ()

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK


# ---------------------------------------------------------------------------
# OLS


def _min_eig(block):
    return float(np.linalg.eigvalsh(block)[0]) if block.size else np.inf


def _is_singular(block, n):
    if block.shape[0] > n:
        return True
    ev = np.linalg.eigvalsh(block)
    return ev[0] <= 1e-12 * max(ev[-1], 1e-300)


def ols_batch(G, XtY, support, n) -> np.ndarray:
    """OLS on ``support`` for every row of ``XtY``; zeros elsewhere."""
    out = np.zeros_like(XtY)
    S = np.asarray(support, dtype=np.int64)
    if S.size == 0:
        return out
    block = G[np.ix_(S, S)]
    if _is_singular(block, n):
        raise SingularDesignError(_min_eig(block), S)
    inv = np.linalg.inv(block)
    inv = 0.5 * (inv + inv.T)
    out[:, S] = kernels.rowwise_matvec(inv, np.ascontiguousarray(XtY[:, S]))
    return out


def fit_ols(problem: RegressionProblem, support=None) -> Fit:
    """Least squares restricted to ``support`` (all columns by default)."""
    S = np.arange(problem.p) if support is None else np.unique(np.asarray(support, dtype=np.int64))
    beta = np.zeros(problem.p)
    if S.size:
        XS = problem.design[:, S]
        block = problem.gram[np.ix_(S, S)]
        if _is_singular(block, problem.n):
            raise SingularDesignError(_min_eig(block / problem.n), S)
        beta[S] = np.linalg.lstsq(XS, problem.response, rcond=None)[0]
    fitted = problem.design @ beta
    return Fit(
        beta=beta,
        active_set=S[beta[S] != 0] if S.size else S,
        residuals=problem.response - fitted,
        fitted=fitted,
        penalty=None,
    )


# ---------------------------------------------------------------------------
# batch solver


def _l1_batch(G, XtY, n, W, config):
    W = np.ascontiguousarray(np.atleast_2d(W), dtype=float)
    betas, sweeps, conv = kernels.cd_gram_batch(
        G, np.ascontiguousarray(XtY), float(n), kernels.MODE_L1, W, 0.0, 0.0, config.max_iters, config.coord_tol
    )
    return betas, sweeps, np.where(conv, OK, NOT_CONVERGED)


def _initial_batch(G, XtY, n, initial, config):
    if isinstance(initial, OLSInit):
        return ols_batch(G, XtY, np.arange(G.shape[0]), n), np.full(XtY.shape[0], OK)
    if isinstance(initial, LassoInit):
        W = np.full((1, G.shape[0]), initial.lambda_tilde)
        b, _, status = _l1_batch(G, XtY, n, W, config)
        b[np.abs(b) <= config.zero_tol] = 0.0
        return b, status
    raise TypeError(f"unknown initial estimator {initial!r}")


def class2_weights(spec, initial, screen_zeros: bool):
    """Total l1 weights (before the factor n) and a per-row infinite-weight flag.

    With ``screen_zeros`` exact-zero initial coordinates get an infinite weight
    (the coordinate is excluded); otherwise near-zero initial values flag the row.
    """
    init = np.atleast_2d(initial)
    a = np.abs(init)
    needs_nonzero = isinstance(spec, AdaptiveLasso) or not isinstance(spec.base, (SCADBase, MCPBase))
    bad = np.zeros(init.shape[0], dtype=bool)
    if needs_nonzero:
        if not screen_zeros:
            bad = (a < INITIAL_ZERO_TOL).any(axis=1)
            a = np.where(a < INITIAL_ZERO_TOL, 1.0, a)  # row is discarded
    with np.errstate(divide="ignore"):
        if isinstance(spec, AdaptiveLasso):
            w = spec.lam / a**spec.gamma
        else:
            w = base_derivative(spec.base, spec.lam, a)
    return np.asarray(w, dtype=float), bad


def _convex_coordinatewise(G, n, spec) -> bool:
    c = np.diag(G) / n
    c = c[c > 0]
    kappa = 0.5 / c
    if isinstance(spec, SCAD):
        return bool(np.all(spec.a - 1.0 > kappa))
    return bool(np.all(spec.a > kappa))


def solve_batch(problem: RegressionProblem, spec, Y=None, config: SolverConfig = SolverConfig(), XtY=None) -> BatchSolution:
    """Fit ``spec`` to every response row of ``Y`` (shape ``(B, n)``) on the shared design."""
    G = np.ascontiguousarray(problem.gram)
    n = problem.n
    if XtY is None:
        Y = np.ascontiguousarray(np.atleast_2d(problem.response if Y is None else Y), dtype=float)
        # row by row so a row's X'y does not depend on the batch it sits in
        XtY = kernels.rowwise_matvec(np.ascontiguousarray(problem.design.T), Y)
    XtY = np.ascontiguousarray(XtY, dtype=float)
    nb = XtY.shape[0]

    if isinstance(spec, Lasso):
        b, s, st = _l1_batch(G, XtY, n, np.full((1, problem.p), spec.lam), config)
        return BatchSolution(b, s, st)

    if isinstance(spec, PostSelectionOLS):
        b, s, st = _l1_batch(G, XtY, n, np.full((1, problem.p), spec.lam), config)
        mask = np.abs(b) > config.zero_tol
        out = np.zeros_like(b)
        patterns, inv = np.unique(mask, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        for k, pat in enumerate(patterns):
            rows = np.flatnonzero(inv == k)
            try:
                out[rows] = ols_batch(G, XtY[rows], np.flatnonzero(pat), n)
            except SingularDesignError:
                st[rows] = SINGULAR
        return BatchSolution(out, s, st)

    if isinstance(spec, (SCAD, MCP)):
        if not _convex_coordinatewise(G, n, spec):
            base = SCADBase(spec.a) if isinstance(spec, SCAD) else MCPBase(spec.a)
            sol = solve_batch(problem, OneStep(spec.lam, base, OLSInit()), Y, config, XtY=XtY)
            sol.notes = sol.notes + ("fallback: coordinate problem not convex, one-step (LLA) estimate used",)
            return sol
        mode = kernels.MODE_SCAD if isinstance(spec, SCAD) else kernels.MODE_MCP
        b, s, conv = kernels.cd_gram_batch(
            G, XtY, float(n), mode, np.zeros((1, problem.p)), float(spec.lam), float(spec.a),
            config.max_iters, config.coord_tol,
        )
        return BatchSolution(b, s, np.where(conv, OK, NOT_CONVERGED))

    if isinstance(spec, (AdaptiveLasso, OneStep)):
        try:
            init, st0 = _initial_batch(G, XtY, n, spec.initial, config)
        except SingularDesignError:
            return BatchSolution(np.zeros_like(XtY), np.zeros(nb, dtype=np.int64), np.full(nb, SINGULAR))
        w, bad = class2_weights(spec, init, screen_zeros=isinstance(spec.initial, LassoInit))
        b, s, st = _l1_batch(G, XtY, n, n * w, config)
        st = np.where(st0 != OK, st0, st)
        st = np.where(bad, INFINITE_WEIGHT, st)
        return BatchSolution(b, s, st, initial=init)

    raise TypeError(f"unknown penalty spec {spec!r}")


# ---------------------------------------------------------------------------
# single fits and optimality


def _weights_at(problem, spec, beta, initial_beta):
    """Total l1 weights whose subgradient system characterises stationarity at ``beta``."""
    n, p = problem.n, problem.p
    if isinstance(spec, Lasso):
        return np.full(p, spec.lam)
    if isinstance(spec, SCAD):
        return n * scad_derivative(np.abs(beta), spec.lam, spec.a)
    if isinstance(spec, MCP):
        return n * mcp_derivative(np.abs(beta), spec.lam, spec.a)
    if isinstance(spec, (AdaptiveLasso, OneStep)):
        if initial_beta is None:
            initial_beta, _ = _initial_batch(
                problem.gram, problem.xty[None, :], n, spec.initial, SolverConfig()
            )
        w, _ = class2_weights(spec, initial_beta, screen_zeros=True)
        return n * w[0]
    raise TypeError(f"no KKT system for {spec!r}")


def _l1_kkt(problem, beta, w) -> float:
    g = 2.0 * (problem.gram @ beta - problem.xty)
    nz = beta != 0
    with np.errstate(invalid="ignore"):
        r = np.where(nz, np.abs(g + w * np.sign(beta)), np.maximum(np.abs(g) - w, 0.0))
    r = np.where(~nz & np.isinf(w), 0.0, r)
    return float(np.max(r))


def kkt_residual(problem: RegressionProblem, spec, beta, initial_beta=None) -> float:
    """Largest violation of the stationarity conditions at ``beta``.

    With ``g = -2 X'(y - X beta)`` and total weights ``w``: ``|g_j + w_j sgn(beta_j)|``
    on nonzero coordinates and ``max(|g_j| - w_j, 0)`` on zero ones. SCAD and MCP
    are linearised at ``beta``. For post-selection OLS only the normal equations
    on the support are checked.
    """
    beta = np.asarray(beta, dtype=float)
    if isinstance(spec, PostSelectionOLS):
        g = 2.0 * (problem.gram @ beta - problem.xty)
        return float(np.max(np.abs(g[beta != 0]), initial=0.0))
    return _l1_kkt(problem, beta, _weights_at(problem, spec, beta, initial_beta))


def _refine_l1(problem, beta, w, config):
    G = np.ascontiguousarray(problem.gram)
    b = np.ascontiguousarray(problem.xty)
    w = np.ascontiguousarray(w, dtype=float)
    tol, sweeps = config.coord_tol, 0
    for _ in range(4):
        if _l1_kkt(problem, beta, w) <= config.kkt_tol:
            break
        tol *= 1e-2
        extra, _ = kernels.cd_gram(G, b, float(problem.n), kernels.MODE_L1, w, 0.0, 0.0, beta, config.max_iters, tol)
        sweeps += int(extra)
    return beta, sweeps


def fit_penalized(problem: RegressionProblem, spec, config: SolverConfig = SolverConfig()) -> Fit:
    """Single penalized fit; each penalty class documents its effective objective.

    SCAD/MCP whose coordinate subproblems are not convex fall back to the
    one-step estimate with the same base penalty (recorded in ``Fit.notes``).
    """
    if isinstance(spec, (AdaptiveLasso, OneStep)) and isinstance(spec.initial, OLSInit) and problem.p > problem.n:
        raise ValueError("OLS initial estimator needs p <= n; use LassoInit")
    sol = solve_batch(problem, spec, config=config)
    status = int(sol.status[0])
    beta = sol.betas[0].copy()
    init = None if sol.initial is None else sol.initial[0].copy()
    if status == SINGULAR:
        if isinstance(spec, PostSelectionOLS):
            sel = np.flatnonzero(np.abs(_lasso_selection(problem, spec, config)) > config.zero_tol)
            raise SingularDesignError(_min_eig(gram_partition(problem, sel)[0]), sel)
        raise SingularDesignError(_min_eig(problem.gram / problem.n))
    if status == INFINITE_WEIGHT:
        j = int(np.flatnonzero(np.abs(init) < INITIAL_ZERO_TOL)[0])
        raise InfiniteWeightError(
            j, f"initial OLS coefficient {j} is {init[j]:.2e} (|.| < {INITIAL_ZERO_TOL:g}); "
               f"its weight would be infinite - use a LassoInit initial estimator to screen it",
        )
    effective = spec
    if sol.notes and isinstance(spec, (SCAD, MCP)):
        base = SCADBase(spec.a) if isinstance(spec, SCAD) else MCPBase(spec.a)
        effective = OneStep(spec.lam, base, OLSInit())
    iters = int(sol.sweeps[0])
    if status == OK and isinstance(effective, PostSelectionOLS):
        sel, extra = _refine_l1(problem, _lasso_selection(problem, spec, config), np.full(problem.p, spec.lam), config)
        iters += extra
        beta = ols_batch(problem.gram, problem.xty[None, :], np.flatnonzero(np.abs(sel) > config.zero_tol), problem.n)[0]
    elif status == OK and isinstance(effective, (Lasso, AdaptiveLasso, OneStep)):
        beta, extra = _refine_l1(problem, beta, _weights_at(problem, effective, beta, init), config)
        iters += extra
    kkt = kkt_residual(problem, effective, beta, init)
    if status == NOT_CONVERGED:
        raise ConvergenceError(beta, kkt, iters)
    return Fit.from_beta(
        problem, beta, spec, zero_tol=config.zero_tol, iterations=iters, kkt_residual=kkt,
        initial_beta=init, notes=sol.notes,
    )


def _lasso_selection(problem, spec, config):
    return solve_batch(problem, Lasso(spec.lam), config=config).betas[0].copy()


def check_irrepresentable(problem: RegressionProblem, true_active, true_signs) -> float:
    """max_j |(C21)_j C11^{-1} sgn(beta_A)| over inactive j (0 if none)."""
    C11, _, C21, _ = gram_partition(problem, true_active)
    if C11.size == 0:
        raise ValueError("true active set is empty")
    if _is_singular(C11, problem.n):
        raise SingularDesignError(_min_eig(C11))
    v = np.linalg.solve(C11, np.asarray(true_signs, dtype=float))
    return float(np.max(np.abs(C21 @ v), initial=0.0))
