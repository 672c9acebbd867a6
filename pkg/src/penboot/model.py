"""Regression problems, penalty specifications, fits and contrasts."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

ZERO_TOL = 1e-10


class DataError(ValueError):
    """Input data that cannot form a valid regression problem."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise DataError("design must be 2-D and response 1-D")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"design has {X.shape[0]} rows but response has length {y.shape[0]}")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={X.shape[0]}, p={X.shape[1]}")
        bad = np.argwhere(~np.isfinite(X))
        if bad.size:
            i, j = bad[0]
            raise DataError(f"non-finite design entry at row {i}, column {j}")
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise DataError(f"non-finite response at row {bad[0]}")
        object.__setattr__(self, "design", _frozen(X))
        object.__setattr__(self, "response", _frozen(y))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """Unscaled Gram matrix X'X."""
        G = self.design.T @ self.design
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        return G

    @cached_property
    def xty(self) -> np.ndarray:
        v = self.design.T @ self.response
        v.setflags(write=False)
        return v

    def with_response(self, y) -> "RegressionProblem":
        new = RegressionProblem(self.design, y)
        # the design is shared, so the Gram matrix is too
        if "gram" in self.__dict__:
            new.__dict__["gram"] = self.gram
        return new


# ---------------------------------------------------------------------------
# initial estimators and penalty families


@dataclass(frozen=True)
class OLSInit:
    pass


@dataclass(frozen=True)
class LassoInit:
    lambda_tilde: float

    def __post_init__(self):
        if not self.lambda_tilde >= 0:
            raise ValueError("lambda_tilde must be nonnegative")


InitialEstimator = Union[OLSInit, LassoInit]


@dataclass(frozen=True)
class SCADBase:
    a: float = 3.7

    def __post_init__(self):
        if not self.a > 2:
            raise ValueError("SCAD requires a > 2")


@dataclass(frozen=True)
class MCPBase:
    a: float = 3.0

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError("MCP requires a > 1")


@dataclass(frozen=True)
class PowerBase:
    q: float = 0.5

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("power base requires 0 < q < 1")


@dataclass(frozen=True)
class LogBase:
    pass


OneStepBase = Union[SCADBase, MCPBase, PowerBase, LogBase]


def _check_lam(lam):
    if not (lam >= 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be a finite nonnegative number, got {lam}")


@dataclass(frozen=True)
class Lasso:
    """Effective objective: ||y - Xt||^2 + lam * sum|t_j|."""

    lam: float

    def __post_init__(self):
        _check_lam(self.lam)


@dataclass(frozen=True)
class SCAD:
    """Effective objective: ||y - Xt||^2 + n * sum SCAD_{lam,a}(|t_j|)."""

    lam: float
    a: float = 3.7

    def __post_init__(self):
        _check_lam(self.lam)
        if not self.a > 2:
            raise ValueError("SCAD requires a > 2")


@dataclass(frozen=True)
class MCP:
    """Effective objective: ||y - Xt||^2 + n * sum MCP_{lam,a}(|t_j|)."""

    lam: float
    a: float = 3.0

    def __post_init__(self):
        _check_lam(self.lam)
        if not self.a > 1:
            raise ValueError("MCP requires a > 1")


@dataclass(frozen=True)
class AdaptiveLasso:
    """Effective objective: ||y - Xt||^2 + n * lam * sum |t_j| / |init_j|^gamma."""

    lam: float
    gamma: float = 1.0
    initial: InitialEstimator = field(default_factory=OLSInit)

    def __post_init__(self):
        _check_lam(self.lam)
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class OneStep:
    """Effective objective: ||y - Xt||^2 + n * sum P'_base(|init_j|) |t_j|."""

    lam: float
    base: OneStepBase = field(default_factory=SCADBase)
    initial: InitialEstimator = field(default_factory=OLSInit)

    def __post_init__(self):
        _check_lam(self.lam)


@dataclass(frozen=True)
class PostSelectionOLS:
    """Lasso(lam) selection followed by OLS on the selected columns."""

    lam: float

    def __post_init__(self):
        _check_lam(self.lam)


PenaltySpec = Union[Lasso, SCAD, MCP, AdaptiveLasso, OneStep, PostSelectionOLS]


def estimator_class(spec: PenaltySpec) -> str:
    """'I' (strong oracle), 'II' (oracle) or 'III' (selection only)."""
    if isinstance(spec, Lasso):
        return "III"
    if isinstance(spec, (SCAD, MCP, PostSelectionOLS)):
        return "I"
    if isinstance(spec, AdaptiveLasso):
        return "II"
    if isinstance(spec, OneStep):
        return "I" if isinstance(spec.base, (SCADBase, MCPBase)) else "II"
    raise TypeError(f"unknown penalty spec {spec!r}")


# ---------------------------------------------------------------------------
# fits and contrasts


def active_indices(beta, zero_tol: float = ZERO_TOL) -> np.ndarray:
    return np.flatnonzero(np.abs(np.asarray(beta)) > zero_tol)


@dataclass(frozen=True, eq=False)
class Fit:
    beta: np.ndarray
    active_set: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    penalty: Optional[PenaltySpec]
    iterations: int = 0
    kkt_residual: float = 0.0
    initial_beta: Optional[np.ndarray] = None
    notes: tuple = ()

    @classmethod
    def from_beta(cls, problem: RegressionProblem, beta, penalty=None, zero_tol=ZERO_TOL, **kw) -> "Fit":
        beta = np.array(beta, dtype=float)
        beta[np.abs(beta) <= zero_tol] = 0.0
        fitted = problem.design @ beta
        return cls(
            beta=_frozen(beta),
            active_set=np.flatnonzero(beta).astype(np.int64),
            residuals=_frozen(problem.response - fitted),
            fitted=_frozen(fitted),
            penalty=penalty,
            **kw,
        )

    @property
    def n(self) -> int:
        return self.residuals.shape[0]


@dataclass(frozen=True, eq=False)
class ContrastMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if D.shape[0] < 1:
            raise ValueError("contrast needs at least one row")
        if not np.isfinite(np.trace(D @ D.T)):
            raise ValueError("contrast matrix must be finite")
        object.__setattr__(self, "matrix", _frozen(D))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def unit(cls, p: int, j: int) -> "ContrastMatrix":
        D = np.zeros((1, p))
        D[0, j] = 1.0
        return cls(D)


# ---------------------------------------------------------------------------
# operations


def load_problem(path, response: str, columns: Optional[Sequence[str]] = None) -> tuple[RegressionProblem, list[str]]:
    """Read a headed numeric CSV into a problem.

    Returns the problem and the names of the design columns, in file order
    unless ``columns`` selects a subset.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise DataError(f"{path}: response column {response!r} not in header {header}")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {i}, column {header[j]!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {i}, column {header[j]!r}: non-finite value {cell!r}")
            values[i - 2, j] = v
    names = [h for h in header if h != response] if columns is None else list(columns)
    missing = [c for c in names if c not in header]
    if missing:
        raise DataError(f"{path}: unknown columns {missing}")
    X = values[:, [header.index(c) for c in names]]
    y = values[:, header.index(response)]
    return RegressionProblem(X, y), names


def gram_partition(problem: RegressionProblem, active):
    """Blocks (C11, C12, C21, C22) of C = X'X/n split by ``active``.

    Indices are taken in sorted order; the complement is sorted too.
    """
    active = np.unique(np.asarray(active, dtype=np.int64))
    if active.size and (active[0] < 0 or active[-1] >= problem.p):
        raise IndexError("active index out of range")
    rest = np.setdiff1d(np.arange(problem.p), active)
    C = problem.gram / problem.n
    return (
        C[np.ix_(active, active)],
        C[np.ix_(active, rest)],
        C[np.ix_(rest, active)],
        C[np.ix_(rest, rest)],
    )
