import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import ndtr

from penboot.config import dgp_from_dict, penalty_from_dict
from penboot.diagnostics import (
    delta_noise_level, estimate_delta, interval_distance, kolmogorov_distance, oracle_interval_prob,
)
from penboot.dgp import DGPSpec
from penboot.model import ContrastMatrix, PostSelectionOLS


def test_oracle_interval_prob_examples():
    assert oracle_interval_prob(-math.inf, 0.0, 2.0, [[3.0]]) == 0.5
    s = math.sqrt(2.0 * 3.0)
    assert oracle_interval_prob(-1.96 * s, 1.96 * s, 2.0, [[3.0]]) == pytest.approx(0.95, abs=1e-4)
    assert oracle_interval_prob(1.0, 1.0, 2.0, [[3.0]]) == 0.0
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert oracle_interval_prob(-1, 1, 1.0, S, [1.0, 0.0]) == oracle_interval_prob(-1, 1, 1.0, [[2.0]])
    with pytest.raises(ValueError):
        oracle_interval_prob(-1, 1, 1.0, S)
    with pytest.raises(ValueError):
        oracle_interval_prob(1, -1, 1.0, [[1.0]])


def brute_interval_distance(x, sd):
    x = np.sort(np.asarray(x))
    eps = 1e-9
    ends = [-math.inf, math.inf] + [v + d for v in x for d in (-eps, 0.0, eps)]
    best = 0.0
    for a, b in itertools.product(ends, ends):
        if a > b:
            continue
        emp = np.mean((x >= a) & (x <= b))
        best = max(best, abs(emp - (ndtr(b / sd) - ndtr(a / sd))))
    return best


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.floats(0.3, 3.0))
def test_interval_distance_matches_brute_force(vals, sd):
    vals = [round(v, 3) for v in vals]  # allow ties
    assert interval_distance(vals, sd) == pytest.approx(brute_interval_distance(vals, sd), abs=1e-7)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=200), st.floats(0.2, 4.0))
def test_kolmogorov_matches_scipy(vals, sd):
    assert kolmogorov_distance(vals, sd) == pytest.approx(stats.kstest(vals, stats.norm(0, sd).cdf).statistic,
                                                          abs=1e-12)
    assert kolmogorov_distance(vals, sd) <= interval_distance(vals, sd) + 1e-15


DGP = DGPSpec(200, 5, 2, (2.0, -1.0), seed=3)
SPEC = PostSelectionOLS(4 * math.sqrt(200 * math.log(200)))
D = ContrastMatrix.unit(5, 0)


def test_synthetic_exact_law_within_dkw():
    M = 2000
    dkw = math.sqrt(math.log(2 / 0.05) / (2 * M))  # 95% band for one CDF
    assert estimate_delta(DGP, SPEC, D, M=M, synthetic_shift=0.0) <= 2 * dkw
    assert estimate_delta(DGP, SPEC, D, M=M, synthetic_shift=0.0, one_sided=True) <= dkw


def test_synthetic_shift_far_away():
    assert estimate_delta(DGP, SPEC, D, M=2000, synthetic_shift=10.0) >= 0.99


def test_noise_level_matches_exact_draws():
    M = 500
    sims = [interval_distance(np.random.default_rng(s).standard_normal(M), 1.0) for s in range(200)]
    assert np.mean(sims) == pytest.approx(delta_noise_level(M), rel=0.1)


def test_class1_delta_decreases_with_n():
    dgp = dgp_from_dict({
        "n": 100, "p": 10, "p0": 3, "beta_active": [3.0, -2.5, 2.0],
        "design": {"type": "skewed_binary", "prob": 0.1}, "error": {"type": "centered_chisq", "df": 0.5},
        "seed": 1,
    })
    pen = {"type": "psols", "lam": {"rule": "sqrt_n_log_n", "c": 4.0}}
    d100 = estimate_delta(dgp, penalty_from_dict(pen, 100), ContrastMatrix.unit(10, 0), n=100, M=2000)
    d400 = estimate_delta(dgp, penalty_from_dict(pen, 400), ContrastMatrix.unit(10, 0), n=400, M=2000)
    assert d400 < d100
    # n^-1/2 predicts a ratio of 2; accept within a factor of 2
    assert 1.0 <= d100 / d400 <= 4.0


def test_estimate_delta_is_reproducible():
    a = estimate_delta(DGP, SPEC, D, M=300)
    assert a == estimate_delta(DGP, SPEC, D, M=300)
    assert a != estimate_delta(DGP, SPEC, D, M=300, seed=4)
    with pytest.raises(ValueError):
        estimate_delta(DGP, SPEC, D, M=50)
