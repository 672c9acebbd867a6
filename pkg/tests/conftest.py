import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from penboot.model import RegressionProblem

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance_record():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, ok, detail):
        _ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_problem(rng, n, p, p0=None, sigma=1.0, signal=2.0):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    k = p if p0 is None else p0
    beta[:k] = signal * rng.choice([-1.0, 1.0], k) * (1 + rng.random(k))
    return RegressionProblem(X, X @ beta + sigma * rng.standard_normal(n)), beta


def orthonormal_design(rng, n, p):
    """n^-1 X'X = I exactly (up to rounding)."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return Q * np.sqrt(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
