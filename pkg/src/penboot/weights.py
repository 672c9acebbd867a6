"""Perturbation weight distributions G* with Var = mu^2 and E(G - mu)^3 = mu^3.

Each distribution carries exact central moments computed from closed forms
(cumulants add over independent components), a sampler taking a numpy
``Generator``, and compliance flags for the two moment identities and for
nonnegative support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
from scipy.special import betaln, digamma, gammaln

MOMENT_TOL = 1e-3


@dataclass(frozen=True)
class Moments:
    """Mean and central moments (variance, third, fourth)."""

    mean: float
    var: float
    third: float
    fourth: float

    @property
    def cumulants(self):
        return self.mean, self.var, self.third, self.fourth - 3 * self.var**2

    def __add__(self, other: "Moments") -> "Moments":
        k1, k2, k3, k4 = (a + b for a, b in zip(self.cumulants, other.cumulants))
        return Moments(k1, k2, k3, k4 + 3 * k2**2)

    def __neg__(self) -> "Moments":
        return Moments(-self.mean, self.var, -self.third, self.fourth)

    @classmethod
    def from_raw(cls, m1, m2, m3, m4) -> "Moments":
        var = m2 - m1**2
        third = m3 - 3 * m1 * m2 + 2 * m1**3
        fourth = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
        return cls(m1, var, third, fourth)


def beta_moments(a, b) -> Moments:
    raw = [math.prod((a + r) / (a + b + r) for r in range(k)) for k in range(1, 5)]
    return Moments.from_raw(*raw)


def gamma_moments(shape, scale) -> Moments:
    k, t = shape, scale
    return Moments(k * t, k * t**2, 2 * k * t**3, (3 * k**2 + 6 * k) * t**4)


def invgamma_moments(shape, scale) -> Moments:
    if shape <= 4:
        raise ValueError("inverse gamma needs shape > 4 for a finite fourth moment")
    raw = [math.exp(k * math.log(scale) + gammaln(shape - k) - gammaln(shape)) for k in range(1, 5)]
    return Moments.from_raw(*raw)


def gg_moments(omega, rho, nu) -> Moments:
    s, u = rho / nu, 1.0 / nu
    raw = [omega**k * math.exp(gammaln(s + k * u) - gammaln(s)) for k in range(1, 5)]
    return Moments.from_raw(*raw)


@dataclass(frozen=True)
class WeightDistribution:
    name: str
    moments: Moments
    sampler: Callable = field(repr=False, compare=False)
    nonnegative: bool = True
    params: dict = field(default_factory=dict, compare=False)

    @property
    def mu(self) -> float:
        return self.moments.mean

    @property
    def central_moments(self):
        return self.moments.var, self.moments.third, self.moments.fourth

    @property
    def variance_residual(self) -> float:
        """(Var - mu^2) / mu^2."""
        return (self.moments.var - self.mu**2) / self.mu**2

    @property
    def third_residual(self) -> float:
        """(mu_3 - mu^3) / mu^3."""
        return (self.moments.third - self.mu**3) / self.mu**3

    @property
    def fourth_ratio(self) -> float:
        """E(G - mu)^4 / mu^4."""
        return self.moments.fourth / self.mu**4

    @property
    def moment_compliant(self) -> bool:
        return abs(self.variance_residual) <= MOMENT_TOL and abs(self.third_residual) <= MOMENT_TOL

    @property
    def compliant(self) -> bool:
        return self.moment_compliant and self.nonnegative

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sampler(rng, n)


def _gamma_ratio_beta(a, b):
    def sample(rng, n):
        x = rng.standard_gamma(a, n)
        y = rng.standard_gamma(b, n)
        return x / (x + y)

    return sample


def builtin_beta() -> WeightDistribution:
    """Beta(1/2, 3/2): mean 1/4 and E(G - mu)^4 / mu^4 = 3."""
    return WeightDistribution("beta", beta_moments(0.5, 1.5), _gamma_ratio_beta(0.5, 1.5), params={"a": 0.5, "b": 1.5})


GAMMA_SHAPE, GAMMA_SCALE, BETA_PARAM = 0.008652, 2.0, 0.036490


def builtin_gamma_beta() -> WeightDistribution:
    """Gamma(0.008652, scale 2) plus an independent Beta(0.03649, 0.03649)."""
    m = gamma_moments(GAMMA_SHAPE, GAMMA_SCALE) + beta_moments(BETA_PARAM, BETA_PARAM)

    def sample(rng, n):
        return GAMMA_SCALE * rng.standard_gamma(GAMMA_SHAPE, n) + rng.beta(BETA_PARAM, BETA_PARAM, n)

    return WeightDistribution(
        "gammabeta", m, sample,
        params={"gamma_shape": GAMMA_SHAPE, "gamma_scale": GAMMA_SCALE, "beta_a": BETA_PARAM, "beta_b": BETA_PARAM},
    )


EXP_MEAN = (79 - 15 * math.sqrt(33)) / 16
INVGAMMA_PARAM = 4 + math.sqrt(11 / 3)


def builtin_exp_invgamma() -> WeightDistribution:
    """Exponential component of mean (79 - 15 sqrt 33)/16 plus InvGamma(4 + sqrt(11/3), same scale).

    That mean is negative (about -0.448): it is the root the two moment
    identities force for this inverse-gamma component. The exponential term
    is therefore entered with a negative sign, G = InvGamma - Exp(0.448).
    The moment identities hold exactly, but the support is not contained in
    [0, inf), so the distribution is flagged ``nonnegative=False``.
    """
    exp_part = gamma_moments(1.0, abs(EXP_MEAN))
    if EXP_MEAN < 0:
        exp_part = -exp_part
    m = exp_part + invgamma_moments(INVGAMMA_PARAM, INVGAMMA_PARAM)

    def sample(rng, n):
        e = EXP_MEAN * rng.standard_exponential(n)
        ig = INVGAMMA_PARAM / rng.standard_gamma(INVGAMMA_PARAM, n)
        return e + ig

    return WeightDistribution(
        "expinvgamma", m, sample, nonnegative=EXP_MEAN >= 0,
        params={"exp_mean": EXP_MEAN, "invgamma_shape": INVGAMMA_PARAM, "invgamma_scale": INVGAMMA_PARAM},
    )


def generalized_gamma(omega, rho, nu) -> WeightDistribution:
    """GG(omega, rho, nu): density proportional to y^(rho-1) exp(-(y/omega)^nu)."""
    s = rho / nu

    def sample(rng, n):
        return omega * rng.standard_gamma(s, n) ** (1.0 / nu)

    return WeightDistribution("gg", gg_moments(omega, rho, nu), sample, params={"omega": omega, "rho": rho, "nu": nu})


def custom(name, sampler, mu, var, mu3, mu4, nonnegative=True) -> WeightDistribution:
    return WeightDistribution(name, Moments(mu, var, mu3, mu4), sampler, nonnegative=nonnegative)


BUILTIN = {
    "beta": builtin_beta,
    "gammabeta": builtin_gamma_beta,
    "expinvgamma": builtin_exp_invgamma,
}


def get_distribution(name: str) -> WeightDistribution:
    if name == "gg":
        rho, nu = solve_generalized_gamma()
        return generalized_gamma(1.0, rho, nu)
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown weight distribution {name!r}; choose from {sorted(BUILTIN) + ['gg']}") from None


def sample_weights(dist: WeightDistribution, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return dist.sample(np.random.default_rng(seed), n)


# ---------------------------------------------------------------------------
# generalized gamma moment equations


class RootNotFoundError(RuntimeError):
    pass


def gg_residuals(rho, nu):
    """Log-scale residuals of E G^2 = 2 (E G)^2 and E G^3 = 5 (E G)^3 for GG(., rho, nu)."""
    s, u = rho / nu, 1.0 / nu
    l0, l1, l2, l3 = (gammaln(s + k * u) for k in range(4))
    return np.array([l2 + l0 - math.log(2) - 2 * l1, l3 + 2 * l0 - math.log(5) - 3 * l1])


def _gg_jacobian(rho, nu):
    s, u = rho / nu, 1.0 / nu
    d = [digamma(s + k * u) for k in range(4)]
    # d/d rho of gammaln((rho + k)/nu) = digamma(.)/nu ; d/d nu = -(rho + k)/nu^2 digamma(.)
    dr = [dk / nu for dk in d]
    dn = [-(rho + k) / nu**2 * dk for k, dk in enumerate(d)]
    return np.array([
        [dr[2] + dr[0] - 2 * dr[1], dn[2] + dn[0] - 2 * dn[1]],
        [dr[3] + 2 * dr[0] - 3 * dr[1], dn[3] + 2 * dn[0] - 3 * dn[1]],
    ])


BOX = (1e-3, 50.0)


def _damped_newton(x, tol, max_iter=200):
    lo, hi = BOX
    r = gg_residuals(*x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            return x, r
        try:
            step = np.linalg.solve(_gg_jacobian(*x), -r)
        except np.linalg.LinAlgError:
            return x, r
        t = 1.0
        while t > 1e-10:
            cand = x + t * step
            if np.all(cand > lo) and np.all(cand < hi):
                rc = gg_residuals(*cand)
                if np.all(np.isfinite(rc)) and np.linalg.norm(rc) < np.linalg.norm(r):
                    x, r = cand, rc
                    break
            t *= 0.5
        else:
            return x, r
    return x, r


def solve_generalized_gamma(omega: float = 1.0, tol: float = 1e-10):
    """(rho, nu) making GG(omega, rho, nu) satisfy the weight moment identities.

    Damped Newton on the log-residuals from an 8x8 log-spaced grid of starts in
    (1e-3, 50)^2. The equations involve only rho and nu, so the result does not
    depend on ``omega`` beyond its validation.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = np.geomspace(2e-3, 40.0, 8)
    best, best_r = None, np.inf
    for rho0, nu0 in product(grid, grid):
        x, r = _damped_newton(np.array([rho0, nu0]), tol)
        err = float(np.max(np.abs(r)))
        if err < best_r:
            best, best_r = x, err
        if err <= tol:
            return float(x[0]), float(x[1])
    raise RootNotFoundError(
        f"no GG root in (1e-3, 50)^2: best residual {best_r:.3e} at rho={best[0]:.4g}, nu={best[1]:.4g}"
    )


# ---------------------------------------------------------------------------
# generalized beta moment equations


class SeriesDivergenceError(ValueError):
    pass


def hyp2f1_series(a, b, c, z, tol=1e-12, max_terms=1_000_000):
    """Gauss hypergeometric series summed until terms (and the ratio-test tail) fall below ``tol``."""
    if abs(z) > 1 or (abs(z) == 1 and c - a - b <= 0):
        raise SeriesDivergenceError(f"2F1({a}, {b}; {c}; {z}) series does not converge")
    if z == 0:
        return 1.0
    if z == 1:
        # Gauss summation; the series itself converges only algebraically here
        return math.exp(gammaln(c) + gammaln(c - a - b) - gammaln(c - a) - gammaln(c - b))
    total, term = 1.0, 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        total += term
        # term ratios tend to |z|; bound the tail by the larger of the two
        ratio = max(abs((a + k + 1) * (b + k + 1) / ((c + k + 1) * (k + 2)) * z), abs(z))
        if ratio < 1:
            tail = abs(term) * ratio / (1 - ratio)
            if tail <= tol * max(abs(total), 1.0):
                return total
    raise SeriesDivergenceError(f"2F1 series not within {tol:g} after {max_terms} terms")


def gb_moment_ratio(k, f, h, omega, rho, tol):
    """E Y^k / g^k for GB(f, g, h, omega, rho)."""
    kf = k / f
    return math.exp(betaln(omega + kf, rho) - betaln(omega, rho)) * hyp2f1_series(
        omega + kf, kf, omega + rho + kf, h, tol=tol / 10
    )


def check_generalized_beta(params, tol: float = 1e-10):
    """Relative residuals of the two GB moment equations.

    ``params`` is (f, g, h, omega, rho). Returns (m2 / (2 m1^2) - 1, m3 / (5 m1^3) - 1).
    """
    f, g, h, omega, rho = params
    if min(f, g, omega, rho) <= 0 or not 0 <= h <= 1:
        raise ValueError("GB needs f, g, omega, rho > 0 and 0 <= h <= 1")
    m1, m2, m3 = (gb_moment_ratio(k, f, h, omega, rho, tol) for k in (1, 2, 3))
    return m2 / (2 * m1**2) - 1.0, m3 / (5 * m1**3) - 1.0
