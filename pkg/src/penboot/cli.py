"""Command line interface: fit, boot, ci, weights, simulate."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapFailure, BootstrapRun, PerturbationMethod, ResidualMethod, run_bootstrap
from .config import ConfigError, initial_from, initial_to, penalty_from_dict, penalty_to_dict
from .harness import load_experiment, run_experiment
from .intervals import one_sided_ci, symmetric_ci
from .model import ContrastMatrix, DataError, Fit, estimator_class, load_problem
from .pivots import PivotError, pivot_bundle
from .penalties import InfiniteWeightError
from .solvers import ConvergenceError, SingularDesignError, fit_penalized
from .weights import RootNotFoundError, generalized_gamma, get_distribution, gg_residuals, solve_generalized_gamma

log = logging.getLogger("penboot")

RESIDUAL_PIVOT = {"I": "R", "II": "Rdot", "III": "Rbreve"}
PERTURB_PIVOT = {"I": "Rcheck", "II": "Rddot", "III": "Rtilde"}


class CLIError(Exception):
    pass


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, obj):
    text = dumps(obj)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read {path}: {exc}") from None


# ---------------------------------------------------------------------------
# fit


def _penalty_from_args(args, n):
    d = {"type": args.penalty, "lam": args.lam}
    if args.a is not None:
        if args.penalty not in ("scad", "mcp"):
            raise CLIError("--a applies to scad and mcp")
        d["a"] = args.a
    if args.gamma is not None:
        if args.penalty != "alasso":
            raise CLIError("--gamma applies to alasso")
        d["gamma"] = args.gamma
    if args.initial is not None:
        if args.penalty not in ("alasso", "onestep"):
            raise CLIError("--initial applies to alasso and onestep")
        d["initial"] = initial_to(initial_from(args.initial))
    if args.base is not None:
        if args.penalty != "onestep":
            raise CLIError("--base applies to onestep")
        d["base"] = {"type": args.base, **({"q": args.q} if args.q is not None else {})}
    return penalty_from_dict(d, n)


def fit_to_dict(fit: Fit, spec, data, response, columns) -> dict:
    e = fit.residuals
    return {
        "data": str(data), "response": response, "columns": list(columns),
        "n": fit.n, "p": int(fit.beta.size),
        "penalty": penalty_to_dict(spec), "class": estimator_class(spec),
        "beta": fit.beta, "active_set": fit.active_set,
        "initial_beta": fit.initial_beta,
        "kkt_residual": fit.kkt_residual, "iterations": fit.iterations,
        "sigma_hat": float(np.sqrt(np.mean((e - e.mean()) ** 2))),
        "notes": list(fit.notes),
    }


def fit_from_dict(d: dict, problem):
    spec = penalty_from_dict(d["penalty"], problem.n)
    init = d.get("initial_beta")
    fit = Fit.from_beta(problem, np.array(d["beta"], dtype=float), spec,
                        initial_beta=None if init is None else np.array(init, dtype=float))
    return fit, spec


def cmd_fit(args):
    problem, names = load_problem(args.data, args.response, args.columns)
    spec = _penalty_from_args(args, problem.n)
    fit = fit_penalized(problem, spec)
    _write(args.out, fit_to_dict(fit, spec, args.data, args.response, names))
    return 0


# ---------------------------------------------------------------------------
# boot


def cmd_boot(args):
    fd = _read_json(args.fit)
    problem, names = load_problem(args.data, fd["response"], fd["columns"])
    fit, spec = fit_from_dict(fd, problem)
    if args.method == "residual":
        if args.dist is not None:
            raise CLIError("--dist applies to the perturbation bootstrap")
        method = ResidualMethod()
    else:
        method = PerturbationMethod(get_distribution(args.dist or "beta"))
        if not method.dist.nonnegative:
            log.warning("weight distribution %s has support below zero", method.dist.name)
    run = run_bootstrap(fit, problem, spec, method, args.B, args.seed)
    out = {
        "fit": fd, "data": str(args.data), "method": method.name,
        "dist": getattr(getattr(method, "dist", None), "name", None),
        "B": args.B, "seed": args.seed,
        "betas": run.betas, "scales": run.scales, "status": run.status,
        "initials": run.initials, "failed": run.n_failed, "notes": list(run.notes),
    }
    _write(args.out, out)
    return 0


def _run_from_dict(d, p):
    method = ResidualMethod() if d["method"] == "residual" else PerturbationMethod(get_distribution(d["dist"]))
    init = d.get("initials")
    return BootstrapRun(
        method, int(d["B"]), int(d["seed"]),
        np.array(d["betas"], dtype=float).reshape(-1, p), np.array(d["scales"], dtype=float),
        np.array(d["status"], dtype=np.int64), None if init is None else np.array(init, dtype=float),
    )


def _resolve_data(path, boot_path):
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    alt = Path(boot_path).parent / p
    return alt if alt.exists() else p


def cmd_ci(args):
    bd = _read_json(args.boot)
    fd = bd["fit"]
    problem, _ = load_problem(_resolve_data(bd["data"], args.boot), fd["response"], fd["columns"])
    fit, spec = fit_from_dict(fd, problem)
    run = _run_from_dict(bd, problem.p)
    if args.contrast is not None:
        D = ContrastMatrix(np.array([[float(x) for x in args.contrast.split(",")]]))
    else:
        D = ContrastMatrix.unit(problem.p, args.coef)
    if D.p != problem.p:
        raise CLIError(f"contrast has {D.p} entries, design has {problem.p} columns")
    cls = estimator_class(spec)
    perturb_kind = args.kind in ("sym-perturb", "sym-perturb-raw")
    if perturb_kind and bd["method"] != "perturbation":
        raise CLIError(f"--kind {args.kind} needs a perturbation bootstrap file")
    if args.kind == "sym-res" and bd["method"] != "residual":
        raise CLIError("--kind sym-res needs a residual bootstrap file")
    pivot = (PERTURB_PIVOT if bd["method"] == "perturbation" else RESIDUAL_PIVOT)[cls]
    bundle = pivot_bundle(fit, problem, D, spec=spec)
    if args.kind in ("lower", "upper"):
        ci = one_sided_ci(run, bundle, fit, problem, D, args.level, pivot, side=args.kind, spec=spec)
    else:
        ci = symmetric_ci(run, bundle, fit, problem, D, args.level, pivot, corrected=args.kind == "sym-perturb",
                          spec=spec)
    _write(args.out, {
        "lower": ci.lower, "upper": ci.upper, "level": ci.level, "kind": ci.kind, "pivot": pivot,
        "theta_hat": ci.theta_hat, "center": ci.center, "quantile": ci.quantile,
        "correction": ci.correction_applied, "replicates_used": ci.replicates_used,
        "contrast": D.matrix[0],
    })
    return 0


# ---------------------------------------------------------------------------
# weights


def cmd_weights_verify(args):
    dist = get_distribution(args.dist)
    _write(args.out, {
        "dist": dist.name, "params": dist.params, "mu": dist.mu,
        "variance_residual": dist.variance_residual, "third_residual": dist.third_residual,
        "fourth_ratio": dist.fourth_ratio, "nonnegative": dist.nonnegative,
        "moment_compliant": dist.moment_compliant, "compliant": dist.compliant,
    })
    return 0 if dist.compliant else 3


def cmd_weights_gg(args):
    rho, nu = solve_generalized_gamma(args.omega, args.tol)
    d = generalized_gamma(args.omega, rho, nu)
    _write(args.out, {
        "omega": args.omega, "rho": rho, "nu": nu, "equation_residuals": gg_residuals(rho, nu),
        "variance_residual": d.variance_residual, "third_residual": d.third_residual,
    })
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    cfg = load_experiment(_read_json(args.config), threads=args.threads)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    log.info("simulation finished in %.1f s", time.perf_counter() - t0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report.to_dict()))
    (out / "report.csv").write_text(report.to_csv())
    if not report.valid:
        log.error("report invalid: failures %s", report.failures)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penboot", description="Penalized regression with bootstrap inference.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a penalized regression to a CSV file")
    f.add_argument("--data", required=True)
    f.add_argument("--response", required=True)
    f.add_argument("--columns", type=lambda s: [c.strip() for c in s.split(",")], default=None,
                   help="comma-separated design columns (default: all but the response)")
    f.add_argument("--penalty", required=True, choices=["lasso", "scad", "mcp", "alasso", "onestep", "psols"])
    f.add_argument("--lambda", dest="lam", type=float, required=True)
    f.add_argument("--a", type=float)
    f.add_argument("--gamma", type=float)
    f.add_argument("--initial", help="ols or lasso:<lambda>")
    f.add_argument("--base", choices=["scad", "mcp", "power", "log"], help="one-step base penalty")
    f.add_argument("--q", type=float, help="exponent of the power base")
    f.add_argument("--out", default="-")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("boot", help="bootstrap a fitted model")
    b.add_argument("--fit", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--method", required=True, choices=["residual", "perturb"])
    b.add_argument("--dist", choices=["beta", "gammabeta", "expinvgamma", "gg"])
    b.add_argument("--B", type=int, required=True)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_boot)

    c = sub.add_parser("ci", help="confidence interval from a bootstrap file")
    c.add_argument("--boot", required=True)
    c.add_argument("--level", type=float, default=0.90)
    c.add_argument("--kind", required=True, choices=["sym-res", "sym-perturb", "sym-perturb-raw", "lower", "upper"])
    g = c.add_mutually_exclusive_group()
    g.add_argument("--coef", type=int, default=0, help="coefficient index (default 0)")
    g.add_argument("--contrast", help="comma-separated contrast row")
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_ci)

    w = sub.add_parser("weights", help="perturbation weight distributions")
    wsub = w.add_subparsers(dest="weights_command", required=True)
    wv = wsub.add_parser("verify", help="moment identities of a weight distribution")
    wv.add_argument("--dist", required=True, choices=["beta", "gammabeta", "expinvgamma", "gg"])
    wv.add_argument("--out", default="-")
    wv.set_defaults(func=cmd_weights_verify)
    wg = wsub.add_parser("solve-gg", help="generalized gamma parameters satisfying the moment identities")
    wg.add_argument("--tol", type=float, default=1e-10)
    wg.add_argument("--omega", type=float, default=1.0)
    wg.add_argument("--out", default="-")
    wg.set_defaults(func=cmd_weights_gg)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)
    return p


HANDLED = (
    CLIError, ConfigError, DataError, PivotError, BootstrapFailure, ConvergenceError, SingularDesignError,
    InfiniteWeightError, RootNotFoundError, ValueError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except HANDLED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
