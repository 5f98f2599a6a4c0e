"""Frequentist/MAP reference estimators: closed-form ridge, CD lasso.

Objective convention: RSS + penalty, not RSS/(2n) + penalty; the
soft-threshold constant is lambda_l / 2 under this convention.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model_core import Dataset


@dataclass(frozen=True)
class PenaltySpec:
    kind: str  # "ridge" or "lasso"
    weight: float

    def __post_init__(self):
        if self.kind not in ("ridge", "lasso"):
            raise ValueError(f"unknown penalty kind: {self.kind!r}")
        if self.weight < 0:
            raise ValueError("penalty weight must be nonnegative")


class SingularSystemError(np.linalg.LinAlgError):
    pass


def ridge_fit(data: Dataset, lambda_r2: float) -> np.ndarray:
    """Closed-form ridge solution (X'X + lambda_r2 I)^-1 X'y."""
    if lambda_r2 < 0:
        raise ValueError("lambda_r2 must be nonnegative")
    X, y = data.X, data.y
    A = X.T @ X + lambda_r2 * np.eye(data.k)
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        c = None
    if c is None or (
        # LAPACK can slip past an exactly singular system on a rounded
        # pivot; a collapsed factor diagonal is the reliable signal
        lambda_r2 == 0.0
        and np.diag(c[0]).min() <= 1e-7 * np.diag(c[0]).max()
    ):
        raise SingularSystemError(
            "X'X is singular at zero penalty; use a positive lambda_r2"
        )
    return scipy.linalg.cho_solve(c, X.T @ y, check_finite=False)


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def lasso_objective(data: Dataset, beta: np.ndarray, lambda_l: float) -> float:
    r = data.y - data.X @ beta
    return float(r @ r + lambda_l * np.sum(np.abs(beta)))


def lasso_kkt_violation(data: Dataset, beta: np.ndarray, lambda_l: float) -> float:
    """Max violation of the subgradient optimality conditions."""
    r = data.y - data.X @ beta
    grad = -2.0 * (data.X.T @ r)
    viol = np.where(
        beta != 0.0,
        np.abs(grad + lambda_l * np.sign(beta)),
        np.maximum(0.0, np.abs(grad) - lambda_l),
    )
    return float(viol.max()) if viol.size else 0.0


def lasso_fit(
    data: Dataset,
    lambda_l: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Cyclic coordinate descent for RSS + lambda_l * sum |beta_j|.

    Each coordinate update is an exact soft-threshold minimization, so
    the objective is nonincreasing and the last iterate is the best
    found. Terminates when the largest coordinate change drops below
    tol; hitting max_iter issues a warning and returns the last iterate.
    """
    if lambda_l < 0:
        raise ValueError("lambda_l must be nonnegative")
    X, y = data.X, data.y
    k = data.k
    beta = np.zeros(k)
    col_ss = (X * X).sum(axis=0)
    if np.any(col_ss == 0):
        raise ValueError("zero column in X; lasso coordinate update undefined")
    r = y.astype(float).copy()
    thresh = lambda_l / 2.0
    for _ in range(max_iter):
        delta = 0.0
        for j in range(k):
            old = beta[j]
            rho = float(X[:, j] @ r) + col_ss[j] * old
            new = _soft_threshold(rho, thresh) / col_ss[j]
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    else:
        warnings.warn(
            f"lasso coordinate descent hit max_iter={max_iter} "
            f"(last max step {delta:.3g})",
            RuntimeWarning,
        )
    return beta
