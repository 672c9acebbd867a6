"""Residual and perturbation bootstrap replicates of penalized estimators.

Replicate ``i`` of a run with master seed ``s`` draws all of its randomness
from ``numpy.random.default_rng(derive_seed(s, i))``, so every replicate is a
pure function of its inputs and its index.  Replicates are refitted in
batches on the shared Gram matrix; each row of a batch is solved
independently of the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import solvers
from .kernels import rowwise_matvec
from .model import Fit, Lasso, RegressionProblem
from .solvers import OK, SolverConfig, solve_batch
from .weights import WeightDistribution

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MAX_FAILURE_RATE = 0.05
CHUNK = 2048

STATUS_ZERO_SCALE = 10
SCALE_RTOL = 1e-12  # scales below this fraction of the response rms count as zero


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """SplitMix64 output for stream position ``index`` of generator state ``master``."""
    master, index = int(master), int(index)  # numpy integers would overflow below
    if master < 0 or index < 0:
        raise ValueError("seeds and indices must be nonnegative")
    return _mix64((master + (index + 1) * GOLDEN_GAMMA) & MASK64)


class BootstrapFailure(RuntimeError):
    def __init__(self, failed, total, counts):
        self.failed, self.total, self.counts = failed, total, counts
        super().__init__(
            f"{failed} of {total} bootstrap replicates failed (> {MAX_FAILURE_RATE:.0%}); status counts {counts}"
        )


@dataclass(frozen=True)
class ResidualMethod:
    name = "residual"


@dataclass(frozen=True)
class PerturbationMethod:
    dist: WeightDistribution
    name = "perturbation"


@dataclass
class ReplicateRecord:
    index: int
    seed: int
    beta: np.ndarray
    active: np.ndarray
    scale: float  # sigma* (residual) or sigma** (perturbation)
    status: int
    initial: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None  # G* draws, perturbation only
    errors: Optional[np.ndarray] = None  # resampled eps*, residual only

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass
class BootstrapRun:
    """All replicates of one run, stored as arrays indexed by replicate."""

    method: object
    B: int
    master_seed: int
    betas: np.ndarray
    scales: np.ndarray
    status: np.ndarray
    initials: Optional[np.ndarray] = None
    notes: tuple = ()
    zero_tol: float = 1e-10
    _weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    @property
    def n_failed(self) -> int:
        return int((~self.ok).sum())

    def record(self, i: int) -> ReplicateRecord:
        b = self.betas[i]
        return ReplicateRecord(
            index=i, seed=derive_seed(self.master_seed, i), beta=b,
            active=np.flatnonzero(np.abs(b) > self.zero_tol), scale=float(self.scales[i]),
            status=int(self.status[i]),
            initial=None if self.initials is None else self.initials[i],
            weights=None if self._weights is None else self._weights[i],
        )

    @property
    def replicates(self):
        return [self.record(i) for i in range(self.B)]

    def status_counts(self) -> dict:
        vals, counts = np.unique(self.status, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


# ---------------------------------------------------------------------------
# draws


def centered_residuals(fit: Fit) -> np.ndarray:
    e = np.asarray(fit.residuals, dtype=float)
    return e - e.mean()


def draw_residual_errors(pool: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Resample ``pool`` with replacement by inverse CDF on uniforms."""
    n = pool.shape[0]
    idx = np.minimum((rng.random(n) * n).astype(np.int64), n - 1)
    return pool[idx]


def pseudo_values(fit: Fit, G: np.ndarray, mu: float) -> np.ndarray:
    """z_i = yhat_i + eps_i (G_i - mu) / mu."""
    return fit.fitted + fit.residuals * ((G - mu) / mu)


def _replicate_inputs(fit, method, seeds):
    n = fit.n
    Y = np.empty((len(seeds), n))
    aux = np.empty((len(seeds), n))
    if isinstance(method, PerturbationMethod):
        mu = method.dist.mu
        for k, s in enumerate(seeds):
            G = method.dist.sample(np.random.default_rng(s), n)
            aux[k] = G
            Y[k] = pseudo_values(fit, G, mu)
    else:
        pool = centered_residuals(fit)
        for k, s in enumerate(seeds):
            e = draw_residual_errors(pool, np.random.default_rng(s))
            aux[k] = e
            Y[k] = fit.fitted + e
    return Y, aux


def _replicate_scales(problem, method, betas, aux):
    if isinstance(method, PerturbationMethod):
        mu = method.dist.mu
        eps = problem.response[None, :] - rowwise_matvec(np.ascontiguousarray(problem.design), np.ascontiguousarray(betas))
        return np.sqrt(np.mean(eps**2 * (aux - mu) ** 2, axis=1)) / mu
    return np.sqrt(np.mean(aux**2, axis=1))


def _solve_replicates(fit, problem, spec, method, seeds, config):
    Y, aux = _replicate_inputs(fit, method, seeds)
    sol = solve_batch(problem, spec, Y, config)
    betas = sol.betas
    betas[np.abs(betas) <= config.zero_tol] = 0.0
    scales = _replicate_scales(problem, method, betas, aux)
    tiny = SCALE_RTOL * np.sqrt(np.mean(problem.response**2))
    status = np.where((sol.status == OK) & ~(scales > tiny), STATUS_ZERO_SCALE, sol.status)
    return betas, scales, status, sol.initial, aux, sol.notes


def _single(fit, problem, spec, method, seed, config):
    betas, scales, status, init, aux, _ = _solve_replicates(fit, problem, spec, method, [seed], config)
    is_pert = isinstance(method, PerturbationMethod)
    return ReplicateRecord(
        index=0, seed=seed, beta=betas[0], active=np.flatnonzero(betas[0]), scale=float(scales[0]),
        status=int(status[0]), initial=None if init is None else init[0],
        weights=aux[0] if is_pert else None, errors=None if is_pert else aux[0],
    )


def residual_replicate(fit: Fit, problem: RegressionProblem, spec, seed: int,
                       config: SolverConfig = SolverConfig()) -> ReplicateRecord:
    """Refit ``spec`` on y* = yhat + eps*, eps* resampled from the centered residuals."""
    return _single(fit, problem, spec, ResidualMethod(), seed, config)


def perturbation_replicate(fit: Fit, problem: RegressionProblem, spec, dist: WeightDistribution, seed: int,
                           config: SolverConfig = SolverConfig()) -> ReplicateRecord:
    """Refit ``spec`` on pseudo-values built from G* draws of ``dist``."""
    return _single(fit, problem, spec, PerturbationMethod(dist), seed, config)


def run_bootstrap(fit: Fit, problem: RegressionProblem, spec, method, B: int, master_seed: int,
                  config: SolverConfig = SolverConfig(), keep_weights: bool = False,
                  raise_on_failure: bool = True) -> BootstrapRun:
    """B replicates; replicate i uses seed ``derive_seed(master_seed, i)``.

    Raises
    ------
    BootstrapFailure
        If more than 5% of the replicates fail (non-convergence, singular
        refit, infinite weight or zero scale) and ``raise_on_failure``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    seeds = [derive_seed(master_seed, i) for i in range(B)]
    betas = np.empty((B, problem.p))
    scales = np.empty(B)
    status = np.empty(B, dtype=np.int64)
    initials = None
    weights = np.empty((B, problem.n)) if keep_weights and isinstance(method, PerturbationMethod) else None
    notes: tuple = ()
    for lo in range(0, B, CHUNK):
        hi = min(lo + CHUNK, B)
        b, s, st, init, aux, notes = _solve_replicates(fit, problem, spec, method, seeds[lo:hi], config)
        betas[lo:hi], scales[lo:hi], status[lo:hi] = b, s, st
        if init is not None:
            if initials is None:
                initials = np.empty((B, problem.p))
            initials[lo:hi] = init
        if weights is not None:
            weights[lo:hi] = aux
    run = BootstrapRun(method, B, master_seed, betas, scales, status, initials, notes, config.zero_tol, weights)
    if raise_on_failure and run.n_failed > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(run.n_failed, B, run.status_counts())
    return run


# ---------------------------------------------------------------------------
# independent check of the pseudo-value reformulation


def minimize_perturbation_objective(problem: RegressionProblem, fit: Fit, G, mu: float, lam: float,
                                    tol: float = 1e-13, max_sweeps: int = 200_000) -> np.ndarray:
    """Lasso minimiser of the two-residual perturbation objective, by plain coordinate descent.

    Minimises sum (y - Xt)^2 (G - mu) + sum (yhat - Xt)^2 (2 mu - G) + mu * lam * sum |t_j|
    working directly with the two residual vectors, without forming pseudo-values.
    """
    X, y, yhat = problem.design, problem.response, fit.fitted
    G = np.asarray(G, dtype=float)
    w1, w2 = G - mu, 2 * mu - G
    p = problem.p
    t = np.zeros(p)
    r1, r2 = y.copy(), yhat.copy()
    curv = mu * (X**2).sum(axis=0)  # sum_i (w1 + w2) x_ij^2
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            xj = X[:, j]
            grad = xj @ (w1 * r1) + xj @ (w2 * r2)  # minus half the smooth gradient at t
            z = grad + curv[j] * t[j]
            new = np.sign(z) * max(abs(z) - 0.5 * mu * lam, 0.0) / curv[j]
            d = new - t[j]
            if d != 0.0:
                r1 -= d * xj
                r2 -= d * xj
                t[j] = new
                delta = max(delta, abs(d))
        if delta < tol:
            return t
    raise solvers.ConvergenceError(t, np.nan, max_sweeps)

