import json
import math
from pathlib import Path

import numpy as np
import pytest

from penboot.config import ConfigError
from penboot.harness import (
    experiment_from_dict, load_experiment, log_log_slope, run_coverage, run_delta_study, run_experiment,
    with_threads,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def smoke():
    return json.loads((CONFIGS / "smoke.json").read_text())


@pytest.fixture(scope="module")
def smoke_report():
    return run_coverage(experiment_from_dict(smoke()))


def test_smoke_runs_and_is_reproducible(smoke_report):
    again = run_coverage(experiment_from_dict(smoke()))
    assert json.dumps(again.to_dict(), sort_keys=True) == json.dumps(smoke_report.to_dict(), sort_keys=True)
    assert smoke_report.valid
    assert smoke_report.to_csv() == again.to_csv()


def test_threads_do_not_change_results(smoke_report):
    threaded = run_coverage(with_threads(experiment_from_dict(smoke()), 3))
    assert threaded.to_dict() == smoke_report.to_dict()


def test_report_metrics_consistent(smoke_report):
    m = smoke_report.metrics
    rows = [r for r in smoke_report.rows if r["ok"]]
    assert m["reps_used"] == len(rows)
    cov = sum(r["covered"] for r in rows) / len(rows)
    assert m["coverage"] == cov
    assert m["coverage_se"] == pytest.approx(math.sqrt(cov * (1 - cov) / len(rows)))
    for k in ("coverage", "selection_rate", "strong_oracle_rate"):
        assert 0 <= m[k] <= 1
    for r in rows:
        assert r["covered"] == int(r["lower"] <= m["theta"] <= r["upper"])
    header = smoke_report.to_csv().splitlines()[0]
    assert header.startswith("rep,ok,covered")


def test_master_seed_changes_results(smoke_report):
    d = smoke()
    d["master_seed"] = 10
    other = run_coverage(experiment_from_dict(d))
    assert other.rows != smoke_report.rows


def test_lasso_selection_rate():
    d = json.loads((CONFIGS / "lasso_bias_corrected.json").read_text())
    d.update(M=200)
    d["boot"]["B"] = 100
    rep = run_coverage(experiment_from_dict(d))
    assert rep.metrics["selection_rate"] >= 0.9
    assert rep.warnings == []


def test_irrepresentable_warning(monkeypatch):
    import penboot.harness as h
    monkeypatch.setattr(h, "check_irrepresentable", lambda *a: 1.25)
    d = json.loads((CONFIGS / "lasso_bias_corrected.json").read_text())
    d.update(M=100)
    d["boot"]["B"] = 100
    rep = run_coverage(experiment_from_dict(d))
    assert any("irrepresentable" in w for w in rep.warnings)
    assert rep.valid


def test_failures_flag_report_invalid():
    # adaptive Lasso with an OLS initial estimator hits exact-zero initial values when the
    # response has no noise in the inactive directions: every fit fails
    d = smoke()
    d["penalty"] = {"type": "alasso", "lam": 0.1}
    d["dgp"]["error"] = {"type": "gaussian", "sigma": 1e-300}
    rep = run_coverage(experiment_from_dict(d))
    assert not rep.valid
    assert rep.failures["reps_failed"] > 5
    assert set(rep.failures["by_reason"]) == {"fit: InfiniteWeightError"}


@pytest.mark.parametrize("patch,match", [
    ({"M": 50}, "B >= 100"),
    ({"pivot": "Rcheck"}, "does not pair"),
    ({"boot": {"method": "perturbation", "B": 100}}, "weight distribution"),
    ({"level": 1.5}, "level"),
    ({"contrast": {"row": [1, 0]}}, "contrast"),
    ({"interval": "two-sided"}, "interval"),
    ({"experiment": "other"}, "unknown experiment"),
])
def test_config_validation(patch, match):
    d = smoke()
    d.update(patch)
    with pytest.raises(ConfigError, match=match):
        load_experiment(d)


def delta_config(M=300):
    return {
        "experiment": "delta",
        "dgp": {"n": 100, "p": 5, "p0": 2, "beta_active": [2.0, -1.5], "seed": 2},
        "estimators": {"lasso": {"type": "lasso", "lam": {"rule": "power", "exponent": 0.6}},
                       "psols": {"type": "psols", "lam": {"rule": "sqrt_n_log_n", "c": 4.0}}},
        "n_grid": [100, 200], "M": M,
    }


def test_delta_study_reproducible_and_shaped():
    cfg = load_experiment(delta_config())
    a = run_experiment(cfg)
    b = run_experiment(with_threads(cfg, 2))
    assert a.to_dict() == b.to_dict()
    assert set(a.metrics["delta_hat"]) == {"lasso", "psols"}
    assert set(a.metrics["delta_hat"]["lasso"]) == {"100", "200"}
    assert a.valid and len(a.rows) == 4
    with pytest.raises(ConfigError):
        d = delta_config()
        d["n_grid"] = [100]
        load_experiment(d)


def test_log_log_slope():
    ns = [100, 400, 1600]
    assert log_log_slope(ns, [3 * n**-0.5 for n in ns]) == pytest.approx(-0.5, abs=1e-12)
