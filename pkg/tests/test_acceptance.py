"""Acceptance criteria 1-9. Each test records one PASS/FAIL line (printed in the terminal summary)."""
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import orthonormal_design
from penboot.bootstrap import minimize_perturbation_objective, perturbation_replicate
from penboot.dgp import draw_errors, design_for, generate_dataset
from penboot.harness import (
    experiment_from_dict, load_experiment, oracle_t_identity, run_coverage, run_delta_study, strong_oracle_event,
)
from penboot.intervals import correction_term, correction_term_ratio3
from penboot.model import ContrastMatrix, Lasso, RegressionProblem
from penboot.pivots import pivot_bundle
from penboot.solvers import fit_ols, fit_penalized, kkt_residual
from penboot.weights import builtin_beta, generalized_gamma, gg_residuals, solve_generalized_gamma

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def config(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # compile (or load cached) numba kernels outside the timed sections
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 3))
    prob = RegressionProblem(X, X @ [1.0, 0.0, -1.0] + rng.standard_normal(20))
    for spec in (Lasso(1.0), Lasso(0.0)):
        fit_penalized(prob, spec)
    perturbation_replicate(fit_penalized(prob, Lasso(1.0)), prob, Lasso(1.0), builtin_beta(), 1)


def test_criterion_1_weight_moments(acceptance_record):
    t0 = time.perf_counter()
    d = builtin_beta()
    mu = 0.25
    beta_ok = (abs(d.mu - mu) <= 1e-12 and abs(d.moments.var - mu**2) <= 1e-12
               and abs(d.moments.third - mu**3) <= 1e-12 and abs(d.fourth_ratio - 3.0) <= 1e-12)
    rho, nu = solve_generalized_gamma(1.0, 1e-10)
    res = float(np.max(np.abs(gg_residuals(rho, nu))))
    g = generalized_gamma(1.0, rho, nu)
    ratios = (g.moments.var / g.mu**2, g.moments.third / g.mu**3)
    elapsed = time.perf_counter() - t0
    ok = beta_ok and res <= 1e-10 and all(abs(r - 1) <= 1e-6 for r in ratios) and elapsed < 1.0
    acceptance_record(1, ok, f"beta exact={beta_ok}, GG residual={res:.1e}, ratios={ratios[0]:.9f},"
                             f"{ratios[1]:.9f}, {elapsed:.3f}s")
    assert ok


def test_criterion_2_solver_correctness(acceptance_record):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {"kkt": 0.0, "ols": 0.0, "soft": 0.0, "zero": 0.0}
    for _ in range(100):
        n = int(rng.integers(25, 201))
        p = int(rng.integers(1, 21))
        X = rng.standard_normal((n, p))
        beta = np.where(rng.random(p) < 0.5, rng.normal(0, 2, p), 0.0)
        y = X @ beta + rng.standard_normal(n)
        prob = RegressionProblem(X, y)
        lam = float(rng.uniform(0, 1.2) * 2 * np.max(np.abs(X.T @ y)))
        fit = fit_penalized(prob, Lasso(lam))
        worst["kkt"] = max(worst["kkt"], kkt_residual(prob, Lasso(lam), fit.beta))
        worst["ols"] = max(worst["ols"], float(np.max(np.abs(fit_penalized(prob, Lasso(0.0)).beta
                                                             - fit_ols(prob).beta))))
        Q = orthonormal_design(rng, n, p)
        yq = Q @ beta + rng.standard_normal(n)
        lam_q = float(rng.uniform(0, 1) * 2 * np.max(np.abs(Q.T @ yq)))
        z = Q.T @ yq / n
        soft = np.sign(z) * np.maximum(np.abs(z) - lam_q / (2 * n), 0.0)
        worst["soft"] = max(worst["soft"], float(np.max(np.abs(fit_penalized(RegressionProblem(Q, yq),
                                                                              Lasso(lam_q)).beta - soft))))
        big = 2 * float(np.max(np.abs(X.T @ y))) * (1 + rng.random())
        worst["zero"] = max(worst["zero"], float(np.max(np.abs(fit_penalized(prob, Lasso(big)).beta))))
    elapsed = time.perf_counter() - t0
    ok = worst["kkt"] <= 1e-8 and worst["ols"] <= 1e-8 and worst["soft"] <= 1e-8 and worst["zero"] == 0.0 \
        and elapsed < 10
    acceptance_record(2, ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_3_perturbation_equivalence(acceptance_record):
    rng = np.random.default_rng(7)
    dist = builtin_beta()
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(50):
        n = int(rng.integers(20, 101))
        p = int(rng.integers(2, 9))
        X = rng.standard_normal((n, p))
        y = X @ np.where(rng.random(p) < 0.6, rng.normal(0, 2, p), 0.0) + rng.standard_normal(n)
        prob = RegressionProblem(X, y)
        lam = float(rng.uniform(0.05, 0.8) * 2 * np.max(np.abs(X.T @ y)))
        fit = fit_penalized(prob, Lasso(lam))
        rec = perturbation_replicate(fit, prob, Lasso(lam), dist, k)
        direct = minimize_perturbation_objective(prob, fit, rec.weights, dist.mu, lam)
        worst = max(worst, float(np.max(np.abs(direct - rec.beta))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    acceptance_record(3, ok, f"max sup-norm gap={worst:.1e}, {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_criterion_4_strong_oracle_and_identity(acceptance_record):
    d = config("class1_residual")
    cfg = experiment_from_dict(d)
    dgp, spec, D = cfg.dgp, cfg.spec, cfg.D
    min_signal = min(abs(b) for b in dgp.beta_active)
    assert min_signal >= 10 * dgp.error.sigma * math.sqrt(math.log(dgp.p) / dgp.n)
    X = design_for(dgp)
    M = 500
    strong, worst = 0, 0.0
    for rep in range(M):
        prob, beta = generate_dataset(dgp, rep, design=X)
        fit = fit_penalized(prob, spec)
        _, s = strong_oracle_event(prob, fit, dgp.active)
        if s:
            strong += 1
            t_fit = math.sqrt(dgp.n) * (D.matrix @ (fit.beta - beta))
            t_or = oracle_t_identity(prob, dgp.active, D, draw_errors(dgp, rep))
            worst = max(worst, float(np.max(np.abs(t_fit - t_or))))
    rate = strong / M
    ok = rate >= 0.98 and worst <= 1e-8
    acceptance_record(4, ok, f"strong_oracle_rate={rate:.3f} (n={dgp.n}, p={dgp.p}, p0={dgp.p0}), "
                             f"max |T_fit - T_oracle|={worst:.1e}")
    assert ok


COVERAGE = {
    "class1_residual": (0.875, 0.925),
    "class1_perturb": (0.875, 0.925),
    "lasso_bias_corrected": (0.86, 0.94),
}


@pytest.fixture(scope="module")
def coverage_reports():
    threads = min(4, os.cpu_count() or 1)
    return {name: run_coverage(experiment_from_dict(config(name), threads=threads)) for name in COVERAGE}


@pytest.mark.slow
def test_criterion_5_coverage(acceptance_record, coverage_reports):
    parts, ok = [], True
    for name, (lo, hi) in COVERAGE.items():
        rep = coverage_reports[name]
        c = rep.metrics["coverage"]
        good = rep.valid and lo <= c <= hi and rep.config["M"] == 1000 and rep.config["boot"]["B"] == 500
        ok &= good
        parts.append(f"{name}={c:.3f}{'' if good else '!'} in [{lo}, {hi}]")
    lasso = coverage_reports["lasso_bias_corrected"].config
    assert lasso["pivot"] == "Rbreve" and lasso["penalty_resolved"]["lam"] == pytest.approx(200**0.6)
    acceptance_record(5, ok, "; ".join(parts))
    assert ok


@pytest.fixture(scope="module")
def delta_reports():
    threads = min(4, os.cpu_count() or 1)
    return {name: run_delta_study(load_experiment(config(name), threads=threads))
            for name in ("delta_lasso_vs_class1", "delta_class1_rate")}


@pytest.mark.slow
def test_criterion_6_lasso_oracle_gap_grows(acceptance_record, delta_reports):
    rep = delta_reports["delta_lasso_vs_class1"]
    M = rep.config["M"]
    mc = 0.5 / math.sqrt(M)  # largest binomial standard error of an empirical probability
    lasso = [rep.metrics["delta_hat"]["lasso"][str(n)] for n in (100, 400, 1600)]
    c1 = rep.metrics["delta_hat"]["psols"]["1600"]
    monotone = all(b > a - 2 * mc for a, b in zip(lasso, lasso[1:])) and lasso[2] > lasso[0]
    ratio = lasso[2] / c1
    ok = rep.valid and M == 2000 and monotone and ratio >= 3
    acceptance_record(6, ok, f"lasso delta={lasso[0]:.3f} < {lasso[1]:.3f} < {lasso[2]:.3f} (2 MC err={2 * mc:.3f}),"
                             f" class-I delta(1600)={c1:.3f}, ratio={ratio:.1f}")
    assert ok


@pytest.mark.slow
def test_criterion_7_class1_rate(acceptance_record, delta_reports):
    rep = delta_reports["delta_class1_rate"]
    label = next(iter(rep.metrics["log_log_slope"]))
    slope = rep.metrics["log_log_slope"][label]
    vals = rep.metrics["delta_hat"][label]
    ok = rep.valid and rep.config["M"] == 2000 and -0.8 <= slope <= -0.2
    acceptance_record(7, ok, f"delta={', '.join(f'{v:.4f}' for v in vals.values())}, slope={slope:.3f} in [-0.8, -0.2]")
    assert ok


def _cli(args, cwd):
    res = subprocess.run([sys.executable, "-m", "penboot.cli", *map(str, args)], cwd=cwd, capture_output=True,
                         text=True)
    return res.returncode


def test_criterion_8_cli_determinism(acceptance_record, tmp_path):
    import shutil
    shutil.copy(ROOT / "data" / "example.csv", tmp_path / "example.csv")
    sim = config("smoke")
    (tmp_path / "sim.json").write_text(json.dumps(sim))
    commands = {
        "fit": (["fit", "--data", "example.csv", "--response", "y", "--penalty", "alasso", "--lambda", "0.02",
                 "--out", "{d}/fit.json"], ["fit.json"]),
        "boot-residual": (["boot", "--fit", "{d}/fit.json", "--data", "example.csv", "--method", "residual",
                           "--B", "300", "--seed", "11", "--out", "{d}/boot_r.json"], ["boot_r.json"]),
        "boot-perturb": (["boot", "--fit", "{d}/fit.json", "--data", "example.csv", "--method", "perturb",
                          "--dist", "beta", "--B", "300", "--seed", "11", "--out", "{d}/boot_p.json"], ["boot_p.json"]),
        "ci-residual": (["ci", "--boot", "{d}/boot_r.json", "--kind", "sym-res", "--level", "0.9",
                         "--out", "{d}/ci_r.json"], ["ci_r.json"]),
        "ci-perturb": (["ci", "--boot", "{d}/boot_p.json", "--kind", "sym-perturb", "--level", "0.9",
                        "--out", "{d}/ci_p.json"], ["ci_p.json"]),
        "weights-verify": (["weights", "verify", "--dist", "gammabeta", "--out", "{d}/wv.json"], ["wv.json"]),
        "weights-solve-gg": (["weights", "solve-gg", "--out", "{d}/gg.json"], ["gg.json"]),
        "simulate": (["simulate", "--config", "sim.json", "--out-dir", "{d}/sim"], ["sim/report.json",
                                                                                    "sim/report.csv"]),
    }
    results = {}
    for run in ("a", "b"):
        (tmp_path / run).mkdir()
        for name, (args, _) in commands.items():
            code = _cli([a.format(d=run) for a in args], tmp_path)
            results.setdefault(name, []).append(code)
    same = {name: all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
            for name, (_, files) in commands.items()}
    codes_ok = all(c == [0, 0] for c in results.values())
    ok = codes_ok and all(same.values())
    acceptance_record(8, ok, f"{sum(same.values())}/{len(same)} commands byte-identical, exit codes ok={codes_ok}")
    assert ok


def test_criterion_9_correction_term(acceptance_record):
    rng = np.random.default_rng(99)
    dist = builtin_beta()
    worst_odd = worst_simpl = 0.0
    zero_ok = True
    for _ in range(100):
        n = int(rng.integers(20, 200))
        p = int(rng.integers(1, 8))
        X = rng.standard_normal((n, p)) * rng.uniform(0.5, 2, p)
        y = X @ rng.normal(0, 2, p) + rng.standard_t(5, n) * rng.uniform(0.2, 3)
        prob = RegressionProblem(X, y)
        fit = fit_ols(prob)
        D = ContrastMatrix(rng.standard_normal((1, p)))
        b = pivot_bundle(fit, prob, D, class_tag="I")
        zero_ok &= correction_term(b, dist, 0.0) == 0.0
        for x in rng.uniform(-4, 4, 5):
            c = correction_term(b, dist, x)
            worst_odd = max(worst_odd, abs(correction_term(b, dist, -x) + c))
            worst_simpl = max(worst_simpl, abs(c - correction_term_ratio3(b, x)))
    ok = zero_ok and worst_odd <= 1e-12 and worst_simpl <= 1e-12
    acceptance_record(9, ok, f"C(0)=0: {zero_ok}, max |C(-x)+C(x)|={worst_odd:.1e}, "
                             f"max |general - simplified|={worst_simpl:.1e}")
    assert ok
