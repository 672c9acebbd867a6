"""Penalty values, derivatives and one-step l1 weights.

Derivatives are per coordinate and enter the objective multiplied by ``n``,
so a Lasso derivative of ``lam / n`` gives a total l1 weight of ``lam``.
"""
from __future__ import annotations

import numpy as np

from .model import (
    MCP,
    SCAD,
    AdaptiveLasso,
    Lasso,
    LogBase,
    MCPBase,
    OneStep,
    PowerBase,
    SCADBase,
)


class InfiniteWeightError(ValueError):
    """An initial coefficient of zero would give an infinite l1 weight."""

    def __init__(self, index, msg=None):
        self.index = index
        super().__init__(msg or f"initial coefficient {index} is zero; weight is infinite "
                                f"(screen the initial estimate or use a Lasso initial estimator)")


def scad_derivative(t, lam, a):
    t = np.asarray(t, dtype=float)
    return np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))


def mcp_derivative(t, lam, a):
    t = np.asarray(t, dtype=float)
    return np.maximum(lam - t / a, 0.0)


def scad_value(t, lam, a):
    t = np.abs(np.asarray(t, dtype=float))
    mid = (2 * a * lam * t - t**2 - lam**2) / (2 * (a - 1))
    return np.where(t <= lam, lam * t, np.where(t <= a * lam, mid, 0.5 * (a + 1) * lam**2))


def mcp_value(t, lam, a):
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t <= a * lam, lam * t - t**2 / (2 * a), 0.5 * a * lam**2)


def base_derivative(base, lam, t):
    """Derivative of the one-step base penalty at ``t`` (vectorised)."""
    t = np.asarray(t, dtype=float)
    if isinstance(base, SCADBase):
        return scad_derivative(t, lam, base.a)
    if isinstance(base, MCPBase):
        return mcp_derivative(t, lam, base.a)
    with np.errstate(divide="ignore"):
        if isinstance(base, PowerBase):
            return lam * base.q * t ** (base.q - 1.0)
        if isinstance(base, LogBase):
            return lam / t
    raise TypeError(f"unknown one-step base {base!r}")


def penalty_derivative(spec, t, coord_weight=None, n=None):
    """Per-coordinate derivative P'_{lam,j}(t) for t >= 0.

    ``coord_weight`` is |initial_j| for the adaptive and one-step families.
    ``n`` is needed only for the Lasso (derivative ``lam / n``).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if isinstance(spec, Lasso):
        if n is None:
            raise ValueError("Lasso derivative needs the sample size n")
        return spec.lam / n
    if isinstance(spec, SCAD):
        return float(scad_derivative(t, spec.lam, spec.a))
    if isinstance(spec, MCP):
        return float(mcp_derivative(t, spec.lam, spec.a))
    if isinstance(spec, (AdaptiveLasso, OneStep)):
        if coord_weight is None:
            raise ValueError("adaptive/one-step derivatives need |initial_j| as coord_weight")
        return float(one_step_weights(spec, np.array([coord_weight]))[0])
    raise TypeError(f"no derivative for {spec!r}")


def one_step_weights(spec, initial_beta) -> np.ndarray:
    """Per-coordinate derivatives P'(|initial_j|) defining the weighted l1 problem."""
    b = np.abs(np.asarray(initial_beta, dtype=float))
    if isinstance(spec, AdaptiveLasso):
        zero = np.flatnonzero(b == 0)
        if zero.size:
            raise InfiniteWeightError(int(zero[0]))
        return spec.lam / b**spec.gamma
    if isinstance(spec, OneStep):
        if isinstance(spec.base, (PowerBase, LogBase)):
            zero = np.flatnonzero(b == 0)
            if zero.size:
                raise InfiniteWeightError(int(zero[0]))
        return np.asarray(base_derivative(spec.base, spec.lam, b), dtype=float)
    raise TypeError(f"one-step weights need an AdaptiveLasso or OneStep spec, got {spec!r}")
