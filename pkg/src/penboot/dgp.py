"""Simulated linear models y = X beta + eps with a fixed design.

The design is drawn once per experiment from the DGP seed; errors are drawn
per repetition from ``derive_seed(error_stream, rep)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .bootstrap import derive_seed
from .model import RegressionProblem

DESIGN_STREAM = 0
ERROR_STREAM = 1
MAX_DESIGN_DRAWS = 100


@dataclass(frozen=True)
class IIDGaussian:
    pass


@dataclass(frozen=True)
class Toeplitz:
    rho: float

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise ValueError("Toeplitz rho must be in (-1, 1)")


@dataclass(frozen=True)
class SkewedBinary:
    """Uncentered Bernoulli(prob) columns; the first ``skewed`` columns use ``prob``, the rest are Gaussian."""

    prob: float
    skewed: int = 1

    def __post_init__(self):
        if not 0 < self.prob < 1:
            raise ValueError("prob must be in (0, 1)")
        if self.skewed < 0:
            raise ValueError("skewed must be >= 0")


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def variance(self):
        return self.sigma**2

    def draw(self, rng, n):
        return self.sigma * rng.standard_normal(n)


@dataclass(frozen=True)
class CenteredChiSq:
    """scale * (chi2(df) - df)."""

    df: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.df > 0 and self.scale > 0):
            raise ValueError("df and scale must be positive")

    @property
    def variance(self):
        return 2 * self.df * self.scale**2

    def draw(self, rng, n):
        return self.scale * (rng.chisquare(self.df, n) - self.df)


@dataclass(frozen=True)
class CenteredExp:
    """Exp(rate) - 1/rate."""

    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    @property
    def variance(self):
        return 1 / self.rate**2

    def draw(self, rng, n):
        return rng.standard_exponential(n) / self.rate - 1 / self.rate


DesignSpec = Union[IIDGaussian, Toeplitz, SkewedBinary]
ErrorSpec = Union[Gaussian, CenteredChiSq, CenteredExp]


@dataclass(frozen=True)
class DGPSpec:
    n: int
    p: int
    p0: int
    beta_active: tuple
    design: DesignSpec = field(default_factory=IIDGaussian)
    error: ErrorSpec = field(default_factory=Gaussian)
    standardize: bool = True
    seed: int = 0
    redraw_design: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta_active", tuple(float(b) for b in self.beta_active))
        if not 0 <= self.p0 <= self.p <= self.n:
            raise ValueError(f"need 0 <= p0 <= p <= n, got p0={self.p0}, p={self.p}, n={self.n}")
        if len(self.beta_active) != self.p0:
            raise ValueError(f"beta_active has {len(self.beta_active)} entries for p0={self.p0}")

    @property
    def beta(self) -> np.ndarray:
        b = np.zeros(self.p)
        b[: self.p0] = self.beta_active
        return b

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    def with_n(self, n: int) -> "DGPSpec":
        d = asdict(self)
        d.update(n=n, design=self.design, error=self.error)
        return DGPSpec(**d)


def _raw_design(spec: DGPSpec, rng) -> np.ndarray:
    n, p = spec.n, spec.p
    d = spec.design
    if isinstance(d, IIDGaussian):
        return rng.standard_normal((n, p))
    if isinstance(d, Toeplitz):
        idx = np.arange(p)
        S = d.rho ** np.abs(idx[:, None] - idx[None, :])
        return rng.standard_normal((n, p)) @ np.linalg.cholesky(S).T
    if isinstance(d, SkewedBinary):
        X = rng.standard_normal((n, p))
        k = min(d.skewed, p)
        X[:, :k] = rng.random((n, k)) < d.prob
        return X
    raise TypeError(f"unknown design {d!r}")


def draw_design(spec: DGPSpec, seed: int) -> np.ndarray:
    """Design with columns scaled to n^-1 sum x^2 = 1; redrawn if rank deficient."""
    for attempt in range(MAX_DESIGN_DRAWS):
        X = _raw_design(spec, np.random.default_rng(derive_seed(seed, attempt)))
        if spec.standardize:
            norms = np.sqrt(np.mean(X**2, axis=0))
            if np.any(norms == 0):
                continue
            X = X / norms
        if np.linalg.matrix_rank(X) == spec.p:
            return X
    raise RuntimeError(f"no full-rank design after {MAX_DESIGN_DRAWS} draws")


def design_for(spec: DGPSpec) -> np.ndarray:
    return draw_design(spec, derive_seed(spec.seed, DESIGN_STREAM))


def error_seed(spec: DGPSpec, rep: int) -> int:
    return derive_seed(derive_seed(spec.seed, ERROR_STREAM), rep)


def draw_errors(spec: DGPSpec, rep: int) -> np.ndarray:
    return spec.error.draw(np.random.default_rng(error_seed(spec, rep)), spec.n)


def generate_dataset(spec: DGPSpec, rep: int, design=None):
    """Problem for repetition ``rep`` and the true beta.

    The fixed design is reused unless ``redraw_design`` is set, in which case
    repetition ``rep`` gets its own design stream.
    """
    if spec.redraw_design:
        X = draw_design(spec, derive_seed(derive_seed(spec.seed, DESIGN_STREAM), rep + 1))
    else:
        X = design_for(spec) if design is None else design
    beta = spec.beta
    return RegressionProblem(X, X @ beta + draw_errors(spec, rep)), beta


def response_matrix(spec: DGPSpec, X, reps) -> np.ndarray:
    """Responses of several repetitions on the fixed design, one row each."""
    mean = X @ spec.beta
    return np.stack([mean + draw_errors(spec, r) for r in reps])
