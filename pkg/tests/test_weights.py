import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import gammaln, hyp2f1

from penboot.weights import (
    EXP_MEAN, INVGAMMA_PARAM, MOMENT_TOL, Moments, RootNotFoundError, SeriesDivergenceError, beta_moments,
    builtin_beta, builtin_exp_invgamma, builtin_gamma_beta, check_generalized_beta, gamma_moments,
    generalized_gamma, get_distribution, gg_residuals, hyp2f1_series, invgamma_moments, sample_weights,
    solve_generalized_gamma,
)


def raw_to_central(m1, m2, m3, m4):
    return (m2 - m1**2, m3 - 3 * m1 * m2 + 2 * m1**3, m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4)


# --- Beta(1/2, 3/2) --------------------------------------------------------------------

def test_beta_exact_moments():
    d = builtin_beta()
    mu = 0.25
    assert d.mu == pytest.approx(mu, abs=1e-15)
    assert abs(d.moments.var - mu**2) <= 1e-12
    assert abs(d.moments.third - mu**3) <= 1e-12
    assert d.fourth_ratio == pytest.approx(3.0, abs=1e-12)
    assert d.compliant


def test_beta_moments_match_scipy():
    m = stats.beta(0.5, 1.5).stats(moments="mvsk")
    d = beta_moments(0.5, 1.5)
    assert d.mean == pytest.approx(float(m[0]), rel=1e-13)
    assert d.var == pytest.approx(float(m[1]), rel=1e-13)
    assert d.third / d.var**1.5 == pytest.approx(float(m[2]), rel=1e-12)
    assert d.fourth / d.var**2 - 3 == pytest.approx(float(m[3]), rel=1e-12)


def test_beta_sample_mean_band():
    x = sample_weights(builtin_beta(), 10**6, seed=11)
    assert abs(x.mean() - 0.25) <= 4 * 0.25 / 1e3
    assert x.min() >= 0


def test_beta_sample_third_moment_band():
    x = sample_weights(builtin_beta(), 10**6, seed=12)
    c = x - 0.25
    # standard error of the third central moment from the exact sixth moment
    raw = [math.prod((0.5 + r) / (2 + r) for r in range(k)) for k in range(7)]
    m = 0.25
    mu6 = sum(math.comb(6, k) * raw[k] * (-m) ** (6 - k) for k in range(7))
    se = math.sqrt((mu6 - (1 / 64) ** 2) / 1e6)
    assert abs(np.mean(c**3) - 1 / 64) <= 5 * se


def test_sampling_is_seeded():
    d = builtin_gamma_beta()
    np.testing.assert_array_equal(sample_weights(d, 50, 3), sample_weights(d, 50, 3))
    assert not np.array_equal(sample_weights(d, 50, 3), sample_weights(d, 50, 4))
    with pytest.raises(ValueError):
        sample_weights(d, 0, 1)


# --- Gamma + Beta --------------------------------------------------------------------

def test_gamma_beta_moments():
    d = builtin_gamma_beta()
    assert d.mu == pytest.approx(0.008652 * 2 + 0.5, abs=1e-12)
    # central moments of the sum from scipy's component moments
    g = stats.gamma(0.008652, scale=2.0)
    b = stats.beta(0.03649, 0.03649)
    var = g.var() + b.var()
    third = g.moment(3) - 3 * g.mean() * g.moment(2) + 2 * g.mean() ** 3 + 0.0  # Beta(a, a) is symmetric
    assert d.moments.var == pytest.approx(var, rel=1e-10)
    assert d.moments.third == pytest.approx(third, rel=1e-10)
    assert abs(d.variance_residual) <= MOMENT_TOL
    assert abs(d.third_residual) <= MOMENT_TOL
    assert d.compliant


def test_gamma_beta_components_independent():
    rng = np.random.default_rng(5)
    n = 200_000
    g = 2.0 * rng.standard_gamma(0.008652, n)
    b = rng.beta(0.03649, 0.03649, n)
    assert abs(np.corrcoef(g, b)[0, 1]) <= 5 / math.sqrt(n)


# --- Exp + InvGamma ------------------------------------------------------------------

def test_exp_invgamma_constants():
    assert EXP_MEAN == pytest.approx((79 - 15 * math.sqrt(33)) / 16, abs=1e-15)
    assert EXP_MEAN == pytest.approx(-0.448027, abs=1e-6)
    assert INVGAMMA_PARAM == pytest.approx(5.914854, abs=1e-6)
    assert INVGAMMA_PARAM > 4


def test_exp_invgamma_identities_but_not_nonnegative():
    d = builtin_exp_invgamma()
    assert abs(d.variance_residual) <= 1e-12
    assert abs(d.third_residual) <= 1e-12
    assert d.moment_compliant
    assert not d.nonnegative and not d.compliant
    assert (sample_weights(d, 100_000, 1) < 0).any()


def test_invgamma_moments_match_scipy():
    a = INVGAMMA_PARAM
    ig = stats.invgamma(a, scale=a)
    m = invgamma_moments(a, a)
    want = raw_to_central(*(ig.moment(k) for k in range(1, 5)))
    np.testing.assert_allclose([m.var, m.third, m.fourth], want, rtol=1e-10)


def test_moments_add_like_independent_sums():
    rng = np.random.default_rng(0)
    a, b = gamma_moments(2.0, 0.5), beta_moments(2.0, 3.0)
    s = a + b
    x = 0.5 * rng.standard_gamma(2.0, 2_000_000) + rng.beta(2.0, 3.0, 2_000_000)
    assert s.mean == pytest.approx(x.mean(), abs=5e-3)
    assert s.var == pytest.approx(x.var(), rel=1e-2)
    assert s.fourth == pytest.approx(np.mean((x - x.mean()) ** 4), rel=3e-2)
    assert (-a).third == -a.third


# --- Generalized gamma --------------------------------------------------------------

def gg_oracle_raw(omega, rho, nu, k):
    return omega**k * math.exp(gammaln((rho + k) / nu) - gammaln(rho / nu))


def test_gg_solver():
    rho, nu = solve_generalized_gamma(1.0, 1e-10)
    assert np.max(np.abs(gg_residuals(rho, nu))) <= 1e-10
    m1, m2, m3 = (gg_oracle_raw(1.0, rho, nu, k) for k in (1, 2, 3))
    var, third, _ = raw_to_central(m1, m2, m3, 0.0)
    assert var / m1**2 == pytest.approx(1.0, abs=1e-6)
    assert third / m1**3 == pytest.approx(1.0, abs=1e-6)
    d = generalized_gamma(1.0, rho, nu)
    assert d.compliant and d.fourth_ratio > 0


def test_gg_scale_invariance():
    assert solve_generalized_gamma(1.0) == pytest.approx(solve_generalized_gamma(2.0), abs=1e-10)
    d = generalized_gamma(2.0, *solve_generalized_gamma(2.0))
    assert abs(d.variance_residual) <= 1e-8


def test_gg_sampler_matches_scipy():
    rho, nu = solve_generalized_gamma()
    x = generalized_gamma(1.0, rho, nu).sample(np.random.default_rng(3), 50_000)
    ref = stats.gengamma(rho / nu, nu)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_gg_errors(monkeypatch):
    with pytest.raises(ValueError):
        solve_generalized_gamma(0.0)
    with pytest.raises(ValueError):
        solve_generalized_gamma(1.0, tol=0.0)
    import penboot.weights as w
    monkeypatch.setattr(w, "gg_residuals", lambda rho, nu: np.array([1.0 + rho**2, 1.0]))
    with pytest.raises(RootNotFoundError, match="best residual"):
        solve_generalized_gamma(1.0)
    monkeypatch.undo()
    assert get_distribution("gg").compliant
    with pytest.raises(ValueError):
        get_distribution("nope")


# --- Generalized beta ---------------------------------------------------------------

def test_gb_beta_embedding():
    r1, r2 = check_generalized_beta((1.0, 1.0, 0.0, 0.5, 1.5))
    assert abs(r1) <= 1e-10 and abs(r2) <= 1e-10


def test_gb_h_zero_is_plain_beta_arithmetic():
    omega, rho = 2.0, 3.0
    m = [math.prod((omega + r) / (omega + rho + r) for r in range(k)) for k in (1, 2, 3)]
    r1, r2 = check_generalized_beta((1.0, 1.0, 0.0, omega, rho))
    assert r1 == pytest.approx(m[1] / (2 * m[0] ** 2) - 1, abs=1e-12)
    assert r2 == pytest.approx(m[2] / (5 * m[0] ** 3) - 1, abs=1e-12)


def test_gb_generic_point_is_not_a_solution():
    r = check_generalized_beta((2.0, 1.0, 0.3, 1.0, 1.0))
    assert max(map(abs, r)) > 1e-10


def test_gb_validation():
    with pytest.raises(ValueError):
        check_generalized_beta((1.0, 1.0, 1.5, 1.0, 1.0))


@given(a=st.floats(0.1, 5), b=st.floats(0.1, 5), c=st.floats(0.5, 8), z=st.floats(-0.95, 0.95))
def test_hyp2f1_series_matches_scipy(a, b, c, z):
    assert hyp2f1_series(a, b, c, z, tol=1e-13) == pytest.approx(float(hyp2f1(a, b, c, z)), rel=1e-9, abs=1e-12)


def test_hyp2f1_at_one_and_divergence():
    assert hyp2f1_series(0.5, 0.7, 3.0, 1.0) == pytest.approx(float(hyp2f1(0.5, 0.7, 3.0, 1.0)), rel=1e-12)
    with pytest.raises(SeriesDivergenceError):
        hyp2f1_series(1.0, 1.0, 1.5, 1.0)
    with pytest.raises(SeriesDivergenceError):
        hyp2f1_series(1.0, 1.0, 2.0, 1.2)


def test_moments_from_raw_roundtrip():
    m = Moments.from_raw(1.0, 2.0, 5.0, 15.0)
    assert (m.var, m.third) == (1.0, 1.0)
