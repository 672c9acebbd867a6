"""Monte Carlo coverage and oracle-approximation experiments.

Seeds are hierarchical: the data of repetition ``r`` come from the DGP seed,
and its bootstrap run uses master seed ``derive_seed(master_seed, r)``, whose
replicate ``i`` uses ``derive_seed(that, i)``. Results therefore do not depend
on the number of threads or on execution order.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bootstrap import BootstrapFailure, PerturbationMethod, ResidualMethod, derive_seed, run_bootstrap
from .config import ConfigError, dgp_from_dict, dgp_to_dict, penalty_from_dict, penalty_to_dict
from .dgp import DGPSpec, design_for, draw_errors, generate_dataset
from .diagnostics import delta_noise_level, interval_distance, oracle_sd, simulate_t
from .intervals import one_sided_ci, symmetric_ci
from .model import ContrastMatrix, RegressionProblem, estimator_class
from .pivots import KINDS, PERTURBATION_KINDS, PivotError, pivot_bundle, xi_matrix
from .solvers import SolverConfig, check_irrepresentable, fit_ols, fit_penalized
from .weights import get_distribution

MAX_FAILURE_RATE = 0.05
ORACLE_RTOL = 1e-8
INTERVALS = ("symmetric", "symmetric-raw", "lower", "upper")


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DGPSpec
    penalty: dict  # penalty dict; lambda schedules are resolved at dgp.n
    contrast: tuple
    boot_method: str = "residual"
    dist: Optional[str] = None
    B: int = 500
    M: int = 1000
    level: float = 0.90
    pivot: str = "R"
    interval: str = "symmetric"
    master_seed: int = 0
    threads: int = 1
    min_counts: bool = True

    def __post_init__(self):
        if self.boot_method not in ("residual", "perturbation"):
            raise ConfigError("boot_method must be 'residual' or 'perturbation'")
        if self.boot_method == "perturbation" and self.dist is None:
            raise ConfigError("perturbation bootstrap needs a weight distribution")
        if self.min_counts and (self.B < 100 or self.M < 100):
            raise ConfigError("coverage runs need B >= 100 and M >= 100")
        if self.pivot not in KINDS:
            raise ConfigError(f"pivot must be one of {KINDS}")
        if (self.pivot in PERTURBATION_KINDS) != (self.boot_method == "perturbation"):
            raise ConfigError(f"pivot {self.pivot} does not pair with a {self.boot_method} bootstrap")
        if self.interval not in INTERVALS:
            raise ConfigError(f"interval must be one of {INTERVALS}")
        if not 0 < self.level < 1:
            raise ConfigError("level must be in (0, 1)")
        if len(self.contrast) != self.dgp.p:
            raise ConfigError(f"contrast has {len(self.contrast)} entries, p = {self.dgp.p}")

    @property
    def spec(self):
        return penalty_from_dict(self.penalty, self.dgp.n)

    @property
    def D(self) -> ContrastMatrix:
        return ContrastMatrix(np.array([self.contrast], dtype=float))

    def method(self):
        if self.boot_method == "residual":
            return ResidualMethod()
        return PerturbationMethod(get_distribution(self.dist))


def _contrast_from(v, p):
    if isinstance(v, dict) and "index" in v:
        row = [0.0] * p
        row[int(v["index"])] = 1.0
        return tuple(row)
    if isinstance(v, dict) and "row" in v:
        return tuple(float(x) for x in v["row"])
    raise ConfigError("contrast must be {'index': j} or {'row': [...]}")


def experiment_from_dict(d: dict, threads: int = 1) -> ExperimentConfig:
    dgp = dgp_from_dict(d["dgp"])
    boot = d.get("boot", {})
    cfg = ExperimentConfig(
        dgp=dgp, penalty=d["penalty"], contrast=_contrast_from(d.get("contrast", {"index": 0}), dgp.p),
        boot_method=boot.get("method", "residual"), dist=boot.get("dist"), B=int(boot.get("B", 500)),
        M=int(d.get("M", 1000)), level=float(d.get("level", 0.90)), pivot=d.get("pivot", "R"),
        interval=d.get("interval", "symmetric"), master_seed=int(d.get("master_seed", 0)), threads=threads,
        min_counts=bool(d.get("enforce_minimums", True)),
    )
    cfg.spec  # validate the penalty now
    return cfg


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "experiment": "coverage",
        "dgp": dgp_to_dict(cfg.dgp),
        "penalty": cfg.penalty,
        "penalty_resolved": penalty_to_dict(cfg.spec),
        "contrast": {"row": list(cfg.contrast)},
        "boot": {"method": cfg.boot_method, "dist": cfg.dist, "B": cfg.B},
        "M": cfg.M, "level": cfg.level, "pivot": cfg.pivot, "interval": cfg.interval,
        "master_seed": cfg.master_seed,
    }


def _rate(k, m):
    p = k / m if m else math.nan
    return p, math.sqrt(p * (1 - p) / m) if m else math.nan


@dataclass
class SummaryReport:
    kind: str
    config: dict
    metrics: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    valid: bool = True
    warnings: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "valid": self.valid, "metrics": self.metrics, "failures": self.failures,
            "warnings": self.warnings, "config": self.config, "rows": self.rows,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows or [self.metrics]
        keys = list(rows[0])
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()


# ---------------------------------------------------------------------------
# coverage


@dataclass
class RepResult:
    rep: int
    ok: bool
    reason: str = ""
    covered: bool = False
    width: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    selected: bool = False
    strong_oracle: bool = False
    identity_error: float = math.nan
    boot_failures: int = 0


def strong_oracle_event(problem: RegressionProblem, fit, true_active) -> tuple[bool, bool]:
    """(selected, strong): A_hat = A, and beta_hat on A equals restricted OLS."""
    selected = np.array_equal(fit.active_set, np.asarray(true_active))
    if not selected:
        return False, False
    ols = fit_ols(problem, true_active).beta
    A = np.asarray(true_active)
    strong = bool(np.all(np.abs(fit.beta[A] - ols[A]) <= ORACLE_RTOL * (1 + np.abs(ols[A]))))
    return True, strong


def oracle_t_identity(problem: RegressionProblem, true_active, D, errors) -> np.ndarray:
    """n^-1/2 sum xi_i eps_i with xi from the true active set and the true errors."""
    xi = xi_matrix(problem, true_active, D)
    return xi.T @ errors / math.sqrt(problem.n)


def _one_rep(cfg: ExperimentConfig, spec, method, X, theta, rep: int, solver: SolverConfig) -> RepResult:
    dgp = cfg.dgp
    problem, beta = generate_dataset(dgp, rep, design=X)
    D = cfg.D
    try:
        fit = fit_penalized(problem, spec, solver)
    except Exception as exc:  # solver failures are counted, not fatal
        return RepResult(rep, False, f"fit: {type(exc).__name__}")
    selected, strong = strong_oracle_event(problem, fit, dgp.active)
    ident = math.nan
    if strong:
        t_fit = math.sqrt(dgp.n) * (D.matrix @ (fit.beta - beta))
        t_or = oracle_t_identity(problem, dgp.active, D, draw_errors(dgp, rep))
        ident = float(np.max(np.abs(t_fit - t_or)))
    try:
        bundle = pivot_bundle(fit, problem, D, spec=spec)
        run = run_bootstrap(fit, problem, spec, method, cfg.B, derive_seed(cfg.master_seed, rep), solver)
        if cfg.interval.startswith("symmetric"):
            ci = symmetric_ci(run, bundle, fit, problem, D, cfg.level, cfg.pivot,
                              corrected=cfg.interval == "symmetric", spec=spec)
        else:
            ci = one_sided_ci(run, bundle, fit, problem, D, cfg.level, cfg.pivot, side=cfg.interval, spec=spec)
    except BootstrapFailure:
        return RepResult(rep, False, "bootstrap", selected=selected, strong_oracle=strong, identity_error=ident)
    except (PivotError, ValueError, np.linalg.LinAlgError) as exc:
        return RepResult(rep, False, f"interval: {type(exc).__name__}", selected=selected,
                         strong_oracle=strong, identity_error=ident)
    return RepResult(rep, True, "", ci.contains(theta), ci.width, ci.lower, ci.upper, selected, strong, ident,
                     run.n_failed)


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def run_coverage(cfg: ExperimentConfig, solver: SolverConfig = SolverConfig()) -> SummaryReport:
    """M repetitions of fit, bootstrap and interval; coverage of theta = D beta."""
    spec = cfg.spec
    method = cfg.method()
    X = design_for(cfg.dgp)
    theta = float(cfg.D.matrix[0] @ cfg.dgp.beta)
    results = _map(lambda r: _one_rep(cfg, spec, method, X, theta, r, solver), range(cfg.M), cfg.threads)
    good = [r for r in results if r.ok]
    m = len(good)
    cov, cov_se = _rate(sum(r.covered for r in good), m)
    sel, sel_se = _rate(sum(r.selected for r in results), cfg.M)
    so, so_se = _rate(sum(r.strong_oracle for r in results), cfg.M)
    ident = [r.identity_error for r in results if r.strong_oracle]
    reasons: dict = {}
    for r in results:
        if not r.ok:
            reasons[r.reason] = reasons.get(r.reason, 0) + 1
    failed = cfg.M - m
    warnings = []
    if estimator_class(spec) == "III":
        irr = check_irrepresentable(RegressionProblem(X, np.zeros(cfg.dgp.n)), cfg.dgp.active,
                                    np.sign(cfg.dgp.beta[cfg.dgp.active]))
        if irr >= 1:
            warnings.append(f"irrepresentable condition fails: max |C21 C11^-1 s| = {irr:.4f}")
    report = SummaryReport(
        kind="coverage",
        config=experiment_to_dict(cfg),
        metrics={
            "theta": theta,
            "coverage": cov, "coverage_se": cov_se,
            "mean_width": float(np.mean([r.width for r in good])) if good else math.nan,
            "selection_rate": sel, "selection_rate_se": sel_se,
            "strong_oracle_rate": so, "strong_oracle_rate_se": so_se,
            "pivot_identity_max_error": float(max(ident)) if ident else math.nan,
            "reps_used": m,
            "bootstrap_replicate_failures": int(sum(r.boot_failures for r in good)),
        },
        failures={"reps_failed": failed, "by_reason": dict(sorted(reasons.items()))},
        valid=failed <= MAX_FAILURE_RATE * cfg.M,
        warnings=warnings,
    )
    report.rows = [
        {"rep": r.rep, "ok": int(r.ok), "covered": int(r.covered), "lower": r.lower, "upper": r.upper,
         "selected": int(r.selected), "strong_oracle": int(r.strong_oracle)}
        for r in results
    ]
    return report


# ---------------------------------------------------------------------------
# oracle-approximation study


@dataclass(frozen=True)
class DeltaStudyConfig:
    dgp: DGPSpec
    estimators: dict  # label -> penalty dict
    n_grid: tuple
    contrast: tuple
    M: int = 2000
    threads: int = 1

    def __post_init__(self):
        if len(self.n_grid) < 2:
            raise ConfigError("a delta study needs at least two sample sizes")
        if self.M < 100:
            raise ConfigError("M must be >= 100")
        if not self.estimators:
            raise ConfigError("no estimators")


def delta_study_from_dict(d: dict, threads: int = 1) -> DeltaStudyConfig:
    dgp = dgp_from_dict(d["dgp"])
    cfg = DeltaStudyConfig(
        dgp=dgp, estimators=dict(d["estimators"]), n_grid=tuple(int(n) for n in d["n_grid"]),
        contrast=_contrast_from(d.get("contrast", {"index": 0}), dgp.p), M=int(d.get("M", 2000)), threads=threads,
    )
    for n in cfg.n_grid:
        for pen in cfg.estimators.values():
            penalty_from_dict(pen, n)
    return cfg


def log_log_slope(ns, values) -> float:
    x, y = np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def run_delta_study(cfg: DeltaStudyConfig, solver: SolverConfig = SolverConfig()) -> SummaryReport:
    """Interval distance of T_n to its oracle normal law per estimator and n."""
    D = ContrastMatrix(np.array([cfg.contrast]))
    rows, failures = [], {}
    deltas: dict = {label: {} for label in cfg.estimators}

    def task(item):
        label, n = item
        dgp = cfg.dgp.with_n(n)
        spec = penalty_from_dict(cfg.estimators[label], n)
        X = design_for(dgp)
        T, ok, problem = simulate_t(dgp, spec, D, cfg.M, solver, design=X)
        sd = oracle_sd(problem, dgp.active, D, dgp.error.variance)
        return label, n, interval_distance(T[ok], sd), int((~ok).sum()), sd, float(spec.lam)

    items = [(label, n) for label in cfg.estimators for n in cfg.n_grid]
    for label, n, delta, nfail, sd, lam in _map(task, items, cfg.threads):
        deltas[label][n] = delta
        failures[f"{label}@{n}"] = nfail
        rows.append({"estimator": label, "n": n, "lambda": lam, "delta_hat": delta, "oracle_sd": sd, "failed": nfail})
    slopes = {label: log_log_slope(cfg.n_grid, [deltas[label][n] for n in cfg.n_grid]) for label in cfg.estimators}
    valid = all(v <= MAX_FAILURE_RATE * cfg.M for v in failures.values())
    return SummaryReport(
        kind="delta",
        config={
            "experiment": "delta", "dgp": dgp_to_dict(cfg.dgp), "estimators": cfg.estimators,
            "n_grid": list(cfg.n_grid), "contrast": {"row": list(cfg.contrast)}, "M": cfg.M,
        },
        metrics={
            "delta_hat": {label: {str(n): v for n, v in d.items()} for label, d in deltas.items()},
            "log_log_slope": slopes,
            "noise_level": delta_noise_level(cfg.M),
        },
        failures=failures,
        valid=valid,
        rows=rows,
    )


def load_experiment(d: dict, threads: int = 1):
    kind = d.get("experiment", "coverage")
    if kind == "coverage":
        return experiment_from_dict(d, threads)
    if kind == "delta":
        return delta_study_from_dict(d, threads)
    raise ConfigError(f"unknown experiment {kind!r}")


def run_experiment(cfg, solver: SolverConfig = SolverConfig()) -> SummaryReport:
    if isinstance(cfg, ExperimentConfig):
        return run_coverage(cfg, solver)
    return run_delta_study(cfg, solver)


def with_threads(cfg, threads: int):
    return replace(cfg, threads=threads)
