"""JSON-friendly dictionaries for penalty specs, DGPs and lambda schedules."""
from __future__ import annotations

import math

from .dgp import (
    CenteredChiSq,
    CenteredExp,
    DGPSpec,
    Gaussian,
    IIDGaussian,
    SkewedBinary,
    Toeplitz,
)
from .model import (
    MCP,
    SCAD,
    AdaptiveLasso,
    Lasso,
    LassoInit,
    LogBase,
    MCPBase,
    OLSInit,
    OneStep,
    PostSelectionOLS,
    PowerBase,
    SCADBase,
)


class ConfigError(ValueError):
    pass


PENALTY_NAMES = {
    "lasso": Lasso,
    "scad": SCAD,
    "mcp": MCP,
    "alasso": AdaptiveLasso,
    "onestep": OneStep,
    "psols": PostSelectionOLS,
}
_NAME_OF = {v: k for k, v in PENALTY_NAMES.items()}


def resolve_lambda(lam, n: int) -> float:
    """A number, or a schedule {"rule": ..., "c": ...} evaluated at n.

    Rules: ``power`` (c n^exponent), ``sqrt_n_log_n`` (c sqrt(n log n)),
    ``sqrt_log_n_over_n`` (c sqrt(log n / n)).
    """
    if isinstance(lam, (int, float)):
        return float(lam)
    if not isinstance(lam, dict) or "rule" not in lam:
        raise ConfigError(f"lambda must be a number or a schedule with a 'rule', got {lam!r}")
    c = float(lam.get("c", 1.0))
    rule = lam["rule"]
    if rule == "power":
        return c * n ** float(lam["exponent"])
    if rule == "sqrt_n_log_n":
        return c * math.sqrt(n * math.log(n))
    if rule == "sqrt_log_n_over_n":
        return c * math.sqrt(math.log(n) / n)
    raise ConfigError(f"unknown lambda rule {rule!r}")


def initial_from(v):
    if v is None or v == "ols" or v == {"type": "ols"}:
        return OLSInit()
    if isinstance(v, str) and v.startswith("lasso:"):
        return LassoInit(float(v.split(":", 1)[1]))
    if isinstance(v, dict) and v.get("type") == "lasso":
        return LassoInit(float(v["lambda_tilde"]))
    raise ConfigError(f"initial estimator must be 'ols' or 'lasso:<lambda>', got {v!r}")


def initial_to(init):
    if isinstance(init, OLSInit):
        return {"type": "ols"}
    return {"type": "lasso", "lambda_tilde": init.lambda_tilde}


def base_from(v):
    if v is None:
        return SCADBase()
    kind = v["type"] if isinstance(v, dict) else v
    args = {k: float(x) for k, x in v.items() if k != "type"} if isinstance(v, dict) else {}
    try:
        return {"scad": SCADBase, "mcp": MCPBase, "power": PowerBase, "log": LogBase}[kind](**args)
    except KeyError:
        raise ConfigError(f"unknown one-step base {kind!r}") from None


def base_to(base):
    if isinstance(base, SCADBase):
        return {"type": "scad", "a": base.a}
    if isinstance(base, MCPBase):
        return {"type": "mcp", "a": base.a}
    if isinstance(base, PowerBase):
        return {"type": "power", "q": base.q}
    return {"type": "log"}


def penalty_from_dict(d: dict, n: int):
    """Penalty spec from {"type": name, "lam": number-or-schedule, ...}."""
    d = dict(d)
    name = d.pop("type", None)
    if name not in PENALTY_NAMES:
        raise ConfigError(f"penalty type must be one of {sorted(PENALTY_NAMES)}, got {name!r}")
    lam = resolve_lambda(d.pop("lam"), n)
    try:
        if name in ("lasso", "psols"):
            spec = PENALTY_NAMES[name](lam)
        elif name in ("scad", "mcp"):
            spec = PENALTY_NAMES[name](lam, **({"a": float(d.pop("a"))} if "a" in d else {}))
        elif name == "alasso":
            spec = AdaptiveLasso(lam, float(d.pop("gamma", 1.0)), initial_from(d.pop("initial", None)))
        else:
            spec = OneStep(lam, base_from(d.pop("base", None)), initial_from(d.pop("initial", None)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} penalty: {exc}") from None
    if d:
        raise ConfigError(f"unexpected keys for {name}: {sorted(d)}")
    return spec


def penalty_to_dict(spec) -> dict:
    out = {"type": _NAME_OF[type(spec)], "lam": spec.lam}
    if isinstance(spec, (SCAD, MCP)):
        out["a"] = spec.a
    if isinstance(spec, AdaptiveLasso):
        out["gamma"] = spec.gamma
        out["initial"] = initial_to(spec.initial)
    if isinstance(spec, OneStep):
        out["base"] = base_to(spec.base)
        out["initial"] = initial_to(spec.initial)
    return out


def _design_from(v):
    v = dict(v or {"type": "iid_gaussian"})
    kind = v.pop("type")
    if kind == "iid_gaussian":
        return IIDGaussian()
    if kind == "toeplitz":
        return Toeplitz(float(v["rho"]))
    if kind == "skewed_binary":
        return SkewedBinary(float(v["prob"]), int(v.get("skewed", 1)))
    raise ConfigError(f"unknown design {kind!r}")


def _design_to(d):
    if isinstance(d, Toeplitz):
        return {"type": "toeplitz", "rho": d.rho}
    if isinstance(d, SkewedBinary):
        return {"type": "skewed_binary", "prob": d.prob, "skewed": d.skewed}
    return {"type": "iid_gaussian"}


def _error_from(v):
    v = dict(v or {"type": "gaussian"})
    kind = v.pop("type")
    cls = {"gaussian": Gaussian, "centered_chisq": CenteredChiSq, "centered_exp": CenteredExp}.get(kind)
    if cls is None:
        raise ConfigError(f"unknown error law {kind!r}")
    return cls(**{k: float(x) for k, x in v.items()})


def _error_to(e):
    if isinstance(e, Gaussian):
        return {"type": "gaussian", "sigma": e.sigma}
    if isinstance(e, CenteredChiSq):
        return {"type": "centered_chisq", "df": e.df, "scale": e.scale}
    return {"type": "centered_exp", "rate": e.rate}


def dgp_from_dict(d: dict) -> DGPSpec:
    try:
        return DGPSpec(
            n=int(d["n"]), p=int(d["p"]), p0=int(d["p0"]),
            beta_active=tuple(d["beta_active"]),
            design=_design_from(d.get("design")),
            error=_error_from(d.get("error")),
            standardize=bool(d.get("standardize", True)),
            seed=int(d.get("seed", 0)),
            redraw_design=bool(d.get("redraw_design", False)),
        )
    except KeyError as exc:
        raise ConfigError(f"dgp is missing {exc}") from None


def dgp_to_dict(dgp: DGPSpec) -> dict:
    return {
        "n": dgp.n, "p": dgp.p, "p0": dgp.p0, "beta_active": list(dgp.beta_active),
        "design": _design_to(dgp.design), "error": _error_to(dgp.error),
        "standardize": dgp.standardize, "seed": dgp.seed, "redraw_design": dgp.redraw_design,
    }
