"""Oracle normal approximation and Monte Carlo estimates of its error.

For a scalar statistic the distance to the oracle normal law is measured
over all intervals. With d(x) = F_M(x) - Phi(x) evaluated at both one-sided
limits of every sample point (and 0 at +-inf), the sup over intervals of
|P_M(T in I) - Phi(I)| is exactly max d - min d, because each endpoint can be
taken open or closed. Over half-lines only it is max |d|, the Kolmogorov
distance.
"""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .bootstrap import derive_seed
from .dgp import DGPSpec, design_for, response_matrix
from .model import ContrastMatrix, RegressionProblem, gram_partition
from .solvers import SolverConfig, solve_batch

MAX_FAILURE_RATE = 0.05
BATCH = 4000


def oracle_sd(problem: RegressionProblem, active, D, sigma_sq: float) -> float:
    """sqrt(sigma^2 D_A C11^-1 D_A') on the true active set."""
    Dm = D.matrix if isinstance(D, ContrastMatrix) else np.atleast_2d(D)
    if Dm.shape[0] != 1:
        raise ValueError("oracle intervals are defined for a scalar contrast")
    active = np.unique(active)
    C11 = gram_partition(problem, active)[0]
    d = Dm[0, active]
    v = sigma_sq * float(d @ np.linalg.solve(C11, d))
    if not v > 0:
        raise ValueError("oracle variance is not positive")
    return math.sqrt(v)


def oracle_interval_prob(a: float, b: float, sigma_sq: float, Sigma, D_dir=None) -> float:
    """Phi(b/s) - Phi(a/s) with s = sqrt(sigma^2 Sigma) for a scalar contrast."""
    S = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if D_dir is not None:
        u = np.atleast_1d(np.asarray(D_dir, dtype=float))
        var = sigma_sq * float(u @ S @ u)
    else:
        if S.shape != (1, 1):
            raise ValueError("a direction is needed for a matrix Sigma")
        var = sigma_sq * float(S[0, 0])
    if not var > 0:
        raise ValueError("oracle variance must be positive")
    if a > b:
        raise ValueError("need a <= b")
    s = math.sqrt(var)
    return float(ndtr(b / s) - ndtr(a / s))


def _cdf_gaps(samples, sd: float, mean: float = 0.0):
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    M = x.size
    if M == 0:
        raise ValueError("no samples")
    u, first = np.unique(x, return_index=True)
    counts = np.diff(np.append(first, M))
    right = np.cumsum(counts) / M
    left = right - counts / M
    phi = ndtr((u - mean) / sd)
    return right - phi, left - phi


def interval_distance(samples, sd: float, mean: float = 0.0) -> float:
    """Exact sup over intervals of |empirical mass - normal(mean, sd^2) mass|."""
    dr, dl = _cdf_gaps(samples, sd, mean)
    hi = max(dr.max(), dl.max(), 0.0)
    lo = min(dr.min(), dl.min(), 0.0)
    return float(min(hi - lo, 1.0))


def kolmogorov_distance(samples, sd: float, mean: float = 0.0) -> float:
    """sup over half-lines of |F_M - Phi| (two-sided KS statistic)."""
    dr, dl = _cdf_gaps(samples, sd, mean)
    return float(max(np.abs(dr).max(), np.abs(dl).max()))


def simulate_t(dgp: DGPSpec, spec, D, M: int, config: SolverConfig = SolverConfig(), design=None):
    """T_n = sqrt(n) D (beta_hat - beta) over M repetitions.

    Returns ``(T, ok, problem)`` where ``ok`` flags converged fits and
    ``problem`` carries the fixed design (its response is repetition 0).
    """
    X = design_for(dgp) if design is None else design
    Dm = D.matrix if isinstance(D, ContrastMatrix) else np.atleast_2d(D)
    T = np.empty(M)
    ok = np.empty(M, dtype=bool)
    base = None
    for lo in range(0, M, BATCH):
        reps = range(lo, min(lo + BATCH, M))
        Y = response_matrix(dgp, X, reps)
        if base is None:
            base = RegressionProblem(X, Y[0])
        sol = solve_batch(base, spec, Y, config)
        T[lo:lo + len(reps)] = math.sqrt(dgp.n) * (sol.betas - dgp.beta) @ Dm[0]
        ok[lo:lo + len(reps)] = sol.ok
    return T, ok, base


def estimate_delta(dgp: DGPSpec, spec, D, n: Optional[int] = None, M: int = 2000, seed: Optional[int] = None,
                   config: SolverConfig = SolverConfig(), synthetic_shift: Optional[float] = None,
                   one_sided: bool = False) -> float:
    """Monte Carlo estimate of the interval distance between T_n and its oracle normal law.

    ``synthetic_shift`` bypasses the model: T is drawn from the oracle normal
    shifted by that many oracle standard deviations (0 gives the exact law).
    """
    if M < 100:
        raise ValueError("M must be >= 100")
    if n is not None and n != dgp.n:
        dgp = dgp.with_n(n)
    if seed is not None and seed != dgp.seed:
        dgp = replace(dgp, seed=seed)
    X = design_for(dgp)
    sd = oracle_sd(RegressionProblem(X, np.zeros(dgp.n)), dgp.active, D, dgp.error.variance)
    if synthetic_shift is not None:
        rng = np.random.default_rng(derive_seed(dgp.seed, 99))
        T = sd * (rng.standard_normal(M) + synthetic_shift)
    else:
        T, ok, _ = simulate_t(dgp, spec, D, M, config, design=X)
        if (~ok).sum() > MAX_FAILURE_RATE * M:
            raise RuntimeError(f"{int((~ok).sum())} of {M} fits failed")
        T = T[ok]
    return kolmogorov_distance(T, sd) if one_sided else interval_distance(T, sd)


def delta_noise_level(M: int) -> float:
    """Mean interval distance of M exact draws: the expected range of a Brownian bridge over sqrt(M)."""
    return math.sqrt(math.pi / 2) / math.sqrt(M)
