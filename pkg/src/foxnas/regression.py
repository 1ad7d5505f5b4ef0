"""Ordinary least squares with coefficient significance and fit diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from ._files import write_csv
from .tdist import t_two_sided_p

SIGNIFICANCE = 0.05
RANK_TOL = 1e-10


class RegressionError(ValueError):
    pass


class InsufficientData(RegressionError):
    def __init__(self, n: int, k: int, context: str = ""):
        where = f" for {context}" if context else ""
        super().__init__(f"insufficient data{where}: n={n} samples, k={k} coefficients (need n > k)")
        self.n = n
        self.k = k


class CollinearFeatures(RegressionError):
    def __init__(self, column: str, rank: int, k: int):
        super().__init__(f"collinear features: column {column!r} is linearly dependent "
                         f"on earlier columns (rank {rank} < {k})")
        self.column = column


@dataclass(frozen=True)
class RStats:
    tss: float
    sse: float
    r_squared: float
    adjusted_r_squared: float
    degenerate: bool = False


def r_stats(y: Sequence[float], y_hat: Sequence[float], k: int) -> RStats:
    """Total/error sums of squares with plain and degrees-of-freedom adjusted R^2.

    A constant target (TSS = 0) is flagged degenerate and both R^2 values are 0.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat must have equal length")
    n = y.size
    tss = float(np.sum((y - y.mean()) ** 2))
    sse = float(np.sum((y - y_hat) ** 2))
    if tss == 0.0 or np.all(y == y[0]):
        # exact test; the mean of repeated values can carry rounding error
        tss = 0.0
        return RStats(tss, sse, 0.0, 0.0, degenerate=True)
    r2 = 1.0 - sse / tss
    adj = 1.0 - sse * (n - 1) / (tss * (n - k)) if n > k else math.nan
    return RStats(tss, sse, r2, adj)


@dataclass(frozen=True)
class RegressionModel:
    """Fitted linear model; coefficient and standard-error vectors lead with the intercept."""

    coefficients: tuple[float, ...]
    standard_errors: tuple[float, ...]
    n: int
    feature_names: tuple[str, ...]
    r_squared: float
    adjusted_r_squared: float
    tss: float
    sse: float
    target_label: str = "accuracy"
    degenerate: bool = False
    _beta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "standard_errors", tuple(float(s) for s in self.standard_errors))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.standard_errors) != self.k:
            raise ValueError("one standard error per coefficient is required")
        if len(self.feature_names) != self.k - 1:
            raise ValueError("feature_names must name every non-intercept coefficient")
        if any(s < 0 or math.isnan(s) for s in self.standard_errors):
            raise ValueError("standard errors must be nonnegative")
        object.__setattr__(self, "_beta", np.array(self.coefficients))

    @property
    def k(self) -> int:
        return len(self.coefficients)

    @property
    def df(self) -> int:
        return self.n - self.k

    @property
    def intercept(self) -> float:
        return self.coefficients[0]

    @property
    def names(self) -> tuple[str, ...]:
        return ("intercept",) + self.feature_names

    def coefficient(self, name: str) -> float:
        return self.coefficients[self.names.index(name)]

    def to_dict(self) -> dict:
        return {
            "target": self.target_label,
            "n": self.n,
            "feature_names": list(self.feature_names),
            "coefficients": list(self.coefficients),
            "standard_errors": list(self.standard_errors),
            "r_squared": self.r_squared,
            "adjusted_r_squared": self.adjusted_r_squared,
            "tss": self.tss,
            "sse": self.sse,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionModel":
        return cls(coefficients=d["coefficients"], standard_errors=d["standard_errors"],
                   n=int(d["n"]), feature_names=d["feature_names"], r_squared=d["r_squared"],
                   adjusted_r_squared=d["adjusted_r_squared"], tss=d["tss"], sse=d["sse"],
                   target_label=d["target"], degenerate=bool(d.get("degenerate", False)))


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def _dependent_column(A: np.ndarray, names: Sequence[str]) -> tuple[str, int]:
    # first column whose inclusion fails to raise the numerical rank
    smax = np.linalg.svd(A, compute_uv=False)[0]
    rank = 0
    for j in range(A.shape[1]):
        s = np.linalg.svd(A[:, : j + 1], compute_uv=False)
        r = int(np.sum(s > RANK_TOL * smax))
        if r <= rank:
            return names[j], int(np.sum(np.linalg.svd(A, compute_uv=False) > RANK_TOL * smax))
        rank = r
    raise AssertionError("design is full rank")


def fit(X, y, feature_names: Sequence[str] | None = None, target_label: str = "accuracy",
        context: str = "") -> RegressionModel:
    """Least-squares fit of ``y`` on ``X`` plus an intercept, solved by QR.

    Parameters
    ----------
    X : array_like, shape (n, k - 1)
        Feature columns; the intercept column is added here.
    y : array_like, shape (n,)
    feature_names : optional labels for the columns of ``X``.

    Raises
    ------
    InsufficientData
        If n <= k.
    CollinearFeatures
        If the numerical rank of the design (tolerance 1e-10 times the
        largest singular value) is below k.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    k = p + 1
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must contain only finite values")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(1, k))
    if len(names) != p:
        raise ValueError(f"{len(names)} feature names for {p} columns")
    if n <= k:
        raise InsufficientData(n, k, context)

    A = _design(X)
    sv = np.linalg.svd(A, compute_uv=False)
    if np.sum(sv > RANK_TOL * sv[0]) < k:
        col, rank = _dependent_column(A, ("intercept",) + names)
        raise CollinearFeatures(col, rank, k)

    Q, R = np.linalg.qr(A)
    beta = solve_triangular(R, Q.T @ y)
    y_hat = A @ beta
    stats = r_stats(y, y_hat, k)
    sigma2 = stats.sse / (n - k)
    R_inv = solve_triangular(R, np.eye(k))
    # diag((A^T A)^-1) = squared row norms of R^-1
    se = np.sqrt(sigma2 * np.sum(R_inv ** 2, axis=1))
    return RegressionModel(coefficients=beta, standard_errors=se, n=n, feature_names=names,
                           r_squared=stats.r_squared, adjusted_r_squared=stats.adjusted_r_squared,
                           tss=stats.tss, sse=stats.sse, target_label=target_label,
                           degenerate=stats.degenerate)


def predict(model: RegressionModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.k - 1,):
        raise ValueError(f"expected {model.k - 1} feature values, got shape {x.shape}")
    return float(model._beta[0] + model._beta[1:] @ x)


def predict_many(model: RegressionModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.k - 1:
        raise ValueError(f"expected an (n, {model.k - 1}) matrix, got shape {X.shape}")
    return model._beta[0] + X @ model._beta[1:]


def t_values(model: RegressionModel) -> np.ndarray:
    """Coefficient over standard error, with 0/0 -> 0 and b/0 -> signed infinity."""
    beta = np.asarray(model.coefficients)
    se = np.asarray(model.standard_errors)
    out = np.zeros_like(beta)
    nz = se > 0
    out[nz] = beta[nz] / se[nz]
    zero_se = ~nz & (beta != 0)
    out[zero_se] = np.copysign(np.inf, beta[zero_se])
    return out


def p_values(t, df: int) -> np.ndarray:
    """Two-sided Student-t p-values for each t."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    return np.array([t_two_sided_p(float(v), df) for v in np.atleast_1d(t)])


def model_p_values(model: RegressionModel) -> np.ndarray:
    return p_values(t_values(model), model.df)


@dataclass(frozen=True)
class FitDiagnostics:
    t_values: np.ndarray
    p_values: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    qq_pairs: np.ndarray  # columns: theoretical quantile, standardized residual

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


def normal_quantiles(n: int) -> np.ndarray:
    nd = NormalDist()
    return np.array([nd.inv_cdf((i - 0.5) / n) for i in range(1, n + 1)])


def qq_pairs(residuals, ddof: int = 1) -> np.ndarray:
    """Sorted standardized residuals against standard-normal quantiles at (i - 0.5)/n.

    Residuals are standardized by sqrt(sum(e^2) / (n - ddof)); pass ddof=k for
    regression residuals. A zero spread leaves the sample quantiles at 0.
    """
    e = np.asarray(residuals, dtype=float)
    n = e.size
    if n == 0:
        return np.empty((0, 2))
    scale = math.sqrt(float(e @ e) / max(n - ddof, 1))
    z = np.sort(e / scale) if scale > 0 else np.zeros(n)
    return np.column_stack([normal_quantiles(n), z])


def residual_report(model: RegressionModel, X, y) -> FitDiagnostics:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    fitted = predict_many(model, X)
    residuals = y - fitted
    t = t_values(model)
    return FitDiagnostics(t_values=t, p_values=p_values(t, model.df), fitted=fitted,
                          residuals=residuals, qq_pairs=qq_pairs(residuals, ddof=model.k))


def write_coefficient_csv(path: str | Path, model: RegressionModel) -> None:
    t = t_values(model)
    p = p_values(t, model.df)
    rows = ([name, *(repr(float(v)) for v in vals)]
            for name, *vals in zip(model.names, model.coefficients, model.standard_errors, t, p))
    write_csv(path, ["term", "coefficient", "std_error", "t_value", "p_value"], rows)


def write_residual_csv(path: str | Path, diag: FitDiagnostics) -> None:
    write_csv(path, ["fitted", "residual"],
              ([repr(float(f)), repr(float(e))] for f, e in zip(diag.fitted, diag.residuals)))


def write_qq_csv(path: str | Path, diag: FitDiagnostics) -> None:
    write_csv(path, ["theoretical", "sample"],
              ([repr(float(q)), repr(float(z))] for q, z in diag.qq_pairs))
