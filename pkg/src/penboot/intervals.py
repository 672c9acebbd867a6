"""Bootstrap quantiles and confidence intervals for a scalar contrast.

A symmetric interval is the set of theta with |H(theta)| <= h, where
H(theta) = (sqrt(n) (theta_hat - theta) + shift) / scale for the pivot's own
bias shift and scale.  Solving for theta gives

    theta in  theta_hat + shift / sqrt(n)  +-  h * scale / sqrt(n)

so bias-corrected pivots re-center the interval and the quantile is mapped
through the same scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .pivots import LASSO_KINDS, CLASS2_KINDS, PERTURBATION_KINDS, PivotBundle, PivotError, bootstrap_pivots
from .weights import WeightDistribution

MIN_REPLICATES = 20

SYMMETRIC_RESIDUAL = "SymmetricResidual"
SYMMETRIC_PERTURB_CORRECTED = "SymmetricPerturbCorrected"
SYMMETRIC_PERTURB_UNCORRECTED = "SymmetricPerturbUncorrected"
ONE_SIDED_LOWER = "OneSidedLower"
ONE_SIDED_UPPER = "OneSidedUpper"


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    kind: str
    theta_hat: float
    correction_applied: Optional[float] = None
    quantile: float = math.nan
    center: float = math.nan
    scale: float = math.nan
    replicates_used: int = 0

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("level must be in (0, 1)")
        if not self.lower <= self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, theta: float) -> bool:
        return self.lower <= theta <= self.upper


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")


def _order_index(prob, B):
    # ceil(prob * B) with binary fuzz removed (0.9 * 10 must give 9)
    return max(1, min(B, math.ceil(round(prob * B, 9))))


def boot_quantile_symmetric(pivots, alpha: float) -> float:
    """ceil((1 - alpha) B)-th order statistic of |pivots|."""
    _check_alpha(alpha)
    a = np.sort(np.abs(np.asarray(pivots, dtype=float).ravel()))
    if a.size == 0:
        raise ValueError("no pivots")
    return float(a[_order_index(1 - alpha, a.size) - 1])


def boot_quantile(pivots, prob: float) -> float:
    """inf{x : F_B(x) >= prob} for the empirical distribution of ``pivots``."""
    if not 0 < prob < 1:
        raise ValueError("prob must be in (0, 1)")
    a = np.sort(np.asarray(pivots, dtype=float).ravel())
    if a.size == 0:
        raise ValueError("no pivots")
    return float(a[_order_index(prob, a.size) - 1])


def z_alpha(alpha: float) -> float:
    """Upper alpha/2 standard normal point."""
    _check_alpha(alpha)
    return float(ndtri(1 - alpha / 2))


def _fourth_ratio(dist) -> float:
    return dist.fourth_ratio if isinstance(dist, WeightDistribution) else float(dist)


def _correction_sums(bundle: PivotBundle):
    if bundle.q != 1:
        raise PivotError("the correction term is defined for a scalar contrast")
    xi = bundle.xi[:, 0]
    e4 = bundle.residuals**4
    sc2 = bundle.sigma_check_sq
    st = float(bundle.Sigma_tilde[0, 0])
    if not (sc2 > 0 and st > 0):
        raise PivotError("correction needs positive sigma_check and Sigma_tilde")
    return sc2, st, float(e4.mean()), float(np.mean(xi**2 * e4)), float(np.mean(xi**4 * e4))


def correction_omegas(bundle: PivotBundle, dist) -> tuple[float, float]:
    """(omega_2, omega_4) for weights with E(G - mu)^4 / mu^4 = K."""
    K = _fourth_ratio(dist)
    sc2, st, e4, s2, s4 = _correction_sums(bundle)
    a = e4 / sc2**2
    b = s2 / (sc2 * st)
    c = s4 / st**2
    w2 = (a - b) * (K - 2)
    w4 = c * (K - 1) + 4 * b * (K - 2) - 3 * a * (K - 2) + 1
    return w2, w4


def _poly(n, x, w2, w4):
    return -(x / n) * (w2 / 2 + w4 / 24 * (x * x - 3))


def correction_term(bundle: PivotBundle, dist, x: float) -> float:
    """C(x) = -(x/n) [omega_2 / 2 + omega_4 / 24 (x^2 - 3)].

    ``dist`` is a :class:`WeightDistribution` or directly its fourth-moment
    ratio E(G - mu)^4 / mu^4.
    """
    w2, w4 = correction_omegas(bundle, dist)
    return _poly(bundle.n, x, w2, w4)


def correction_term_ratio3(bundle: PivotBundle, x: float) -> float:
    """The correction with the fourth-moment ratio fixed at 3 (Beta(1/2, 3/2) weights)."""
    sc2, st, e4, s2, s4 = _correction_sums(bundle)
    w2 = e4 / sc2**2 - s2 / (sc2 * st)
    w4 = 2 * s4 / st**2 + 4 * s2 / (sc2 * st) - 3 * e4 / sc2**2 + 1
    return _poly(bundle.n, x, w2, w4)


def pivot_center_scale(bundle: PivotBundle, kind: str) -> tuple[float, float]:
    """(center, scale) such that the interval is center +- h * scale / sqrt(n)."""
    if bundle.q != 1:
        raise PivotError("intervals are defined for a scalar contrast")
    theta = float(bundle.theta_hat[0])
    center = theta
    if kind in LASSO_KINDS:
        center = theta - float(bundle.bias[0]) / math.sqrt(bundle.n)
    elif kind in CLASS2_KINDS:
        center = theta + float(bundle.bias[0]) / math.sqrt(bundle.n)
    if kind in PERTURBATION_KINDS:
        scale = math.sqrt(bundle.sigma_check_sq * float(bundle.Sigma_hat[0, 0]))
    else:
        scale = math.sqrt(bundle.sigma_hat_sq)
    return center, scale


def symmetric_from_pivots(pivots, bundle: PivotBundle, kind: str, level: float, corrected: bool = True,
                          dist=None) -> ConfidenceInterval:
    """Symmetric interval from precomputed bootstrap pivots."""
    alpha = 1 - level
    _check_alpha(alpha)
    piv = np.asarray(pivots, dtype=float).ravel()
    if piv.size < MIN_REPLICATES:
        raise ValueError(f"only {piv.size} valid replicates; at least {MIN_REPLICATES} are needed")
    h = boot_quantile_symmetric(piv, alpha)
    center, scale = pivot_center_scale(bundle, kind)
    correction = None
    if kind in PERTURBATION_KINDS:
        label = SYMMETRIC_PERTURB_UNCORRECTED
        if corrected:
            if dist is None:
                raise ValueError("the corrected perturbation interval needs the weight distribution")
            correction = correction_term(bundle, dist, z_alpha(alpha))
            h = max(h + correction, 0.0)
            label = SYMMETRIC_PERTURB_CORRECTED
    else:
        label = SYMMETRIC_RESIDUAL
    half = h * scale / math.sqrt(bundle.n)
    return ConfidenceInterval(
        center - half, center + half, level, label, float(bundle.theta_hat[0]), correction,
        quantile=h, center=center, scale=scale, replicates_used=int(piv.size),
    )


def symmetric_ci(run, bundle: PivotBundle, fit, problem, D, level: float, kind: str,
                 corrected: bool = True, spec=None) -> ConfidenceInterval:
    """Symmetric bootstrap interval for the scalar contrast ``D beta``.

    Residual runs pair with R, Rbreve, Rdot and perturbation runs with
    Rcheck, Rtilde, Rddot. The corrected perturbation interval adds
    C(z_alpha) to the bootstrap quantile (clamped at zero).
    """
    piv, _ = bootstrap_pivots(run, fit, problem, D, kind, bundle, spec)
    dist = getattr(run.method, "dist", None)
    return symmetric_from_pivots(piv[:, 0], bundle, kind, level, corrected, dist)


def one_sided_ci(run, bundle: PivotBundle, fit, problem, D, level: float, kind: str,
                 side: str = "lower", spec=None) -> ConfidenceInterval:
    """One-sided interval [L, inf) (``side='lower'``) or (-inf, U] from the pivot's upper/lower quantile."""
    piv, _ = bootstrap_pivots(run, fit, problem, D, kind, bundle, spec)
    piv = piv[:, 0]
    if piv.size < MIN_REPLICATES:
        raise ValueError(f"only {piv.size} valid replicates; at least {MIN_REPLICATES} are needed")
    center, scale = pivot_center_scale(bundle, kind)
    s = scale / math.sqrt(bundle.n)
    theta = float(bundle.theta_hat[0])
    # H = (center - theta) / s, so theta >= center - s * q_{level}(H*)
    if side == "lower":
        return ConfidenceInterval(center - s * boot_quantile(piv, level), math.inf, level, ONE_SIDED_LOWER, theta,
                                  center=center, scale=scale, replicates_used=int(piv.size))
    if side == "upper":
        return ConfidenceInterval(-math.inf, center - s * boot_quantile(piv, 1 - level), level, ONE_SIDED_UPPER,
                                  theta, center=center, scale=scale, replicates_used=int(piv.size))
    raise ValueError("side must be 'lower' or 'upper'")
