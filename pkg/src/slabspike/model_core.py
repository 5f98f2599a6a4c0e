"""Domain types, standardization, and closed-form prior algebra.

The slab-scale hyperparameter gamma2 is never given a prior directly;
instead a uniform prior sits on the implied coefficient of determination

    r2(gamma2, q) = q * k * gamma2 * vbar / (q * k * gamma2 * vbar + 1),

with vbar the average sample variance of the candidate predictors
(rescaled by nu/(nu-2) under the Student-t slab so that the slab variance
enters consistently). This module holds the two directions of that map,
the dataset/standardization plumbing, and textbook slab moment facts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GAUSSIAN = "gaussian"
STUDENT_T = "student-t"


class ConstantColumnError(ValueError):
    """A column with zero sample variance cannot be standardized."""


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Standardization:
    """Original per-column moments, kept for back-transformation."""

    y_mean: float
    y_sd: float
    x_mean: np.ndarray
    x_sd: np.ndarray
    u_mean: np.ndarray
    u_sd: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Response, candidate predictors, and always-included columns.

    `X` holds the k candidate predictors subject to selection, `U` the
    l >= 0 columns that always stay in the regression. This constructor
    trusts its caller; validated construction (missing values, constant
    columns, n >= 2) goes through `standardize` and the CSV ingestion
    path, so tests can build degenerate fixtures directly.
    """

    y: np.ndarray
    X: np.ndarray
    U: np.ndarray
    names: tuple[str, ...]
    standardization: Standardization | None = None
    u_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen_array(self.y))
        object.__setattr__(self, "X", _frozen_array(self.X))
        object.__setattr__(self, "U", _frozen_array(self.U))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "u_names", tuple(self.u_names))
        if self.X.ndim != 2:
            raise ValueError("X must be 2-d")
        if self.U.ndim != 2:
            raise ValueError("U must be 2-d")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y and X row counts differ")
        if self.U.shape[0] != self.X.shape[0]:
            raise ValueError("U and X row counts differ")
        if len(self.names) != self.X.shape[1]:
            raise ValueError("need one name per candidate predictor")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def l(self) -> int:
        return self.U.shape[1]


def _standardize_matrix(M: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = M.mean(axis=0)
    sd = M.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd == 0.0)
    if bad.size:
        raise ConstantColumnError(f"constant column: {labels[bad[0]]}")
    return (M - mean) / sd, mean, sd


def standardize(raw: Dataset) -> Dataset:
    """Center and scale every column of y, X, U to mean 0, sd 1 (ddof=1).

    Original moments are preserved in the standardization metadata. A
    constant column is rejected by name. Idempotent up to roundoff.
    """
    if raw.n < 2:
        raise ValueError("need at least 2 observations to standardize")
    if raw.l >= raw.n:
        raise ValueError("always-included block must have fewer columns than rows")
    ymat, y_mean, y_sd = _standardize_matrix(raw.y[:, None], ["<response>"])
    X, x_mean, x_sd = _standardize_matrix(raw.X, list(raw.names))
    if raw.l:
        u_labels = list(raw.u_names) or [f"u{j + 1}" for j in range(raw.l)]
        U, u_mean, u_sd = _standardize_matrix(raw.U, u_labels)
    else:
        U = raw.U
        u_mean = np.zeros(0)
        u_sd = np.zeros(0)
    meta = Standardization(
        y_mean=float(y_mean[0]), y_sd=float(y_sd[0]),
        x_mean=_frozen_array(x_mean), x_sd=_frozen_array(x_sd),
        u_mean=_frozen_array(u_mean), u_sd=_frozen_array(u_sd),
    )
    return replace(raw, y=ymat[:, 0], X=X, U=U, standardization=meta)


@dataclass(frozen=True)
class SlabSpec:
    """Slab family plus sampler configuration.

    family is "gaussian" or "student-t"; nu (the fixed degrees of
    freedom, > 2) is required for the Student-t slab and ignored
    otherwise. nu is never learned.
    """

    family: str = GAUSSIAN
    nu: float | None = None
    grid_q: int = 100
    grid_r2: int = 100
    n_iter: int = 22_000
    n_burn: int = 2_000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.family not in (GAUSSIAN, STUDENT_T):
            raise ValueError(f"unknown slab family: {self.family!r}")
        if self.family == STUDENT_T:
            if self.nu is None or not self.nu > 2:
                raise ValueError("student-t slab requires nu > 2 (finite slab variance)")
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("need 0 <= n_burn < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.grid_q < 2 or self.grid_r2 < 2:
            raise ValueError("grid resolutions must be >= 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class VbarX:
    """Average sample variance of the candidate predictors.

    Rescaled by nu/(nu-2) under the Student-t slab; on standardized data
    the Gaussian-family value is 1 up to roundoff. Always computed from
    the data so the algebra stays correct if standardization is skipped.
    """

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("vbar must be positive")

    def __float__(self) -> float:
        return self.value


def compute_vbar(data: Dataset, family: str = GAUSSIAN, nu: float | None = None) -> VbarX:
    v = float(data.X.var(axis=0, ddof=1).mean())
    if family == STUDENT_T:
        if nu is None or not nu > 2:
            raise ValueError("student-t vbar requires nu > 2")
        v *= nu / (nu - 2.0)
    return VbarX(v)


def _vbar_value(vbar) -> float:
    return float(vbar)


def r2_from_gamma2_q(gamma2: float, q: float, k: int, vbar) -> float:
    """Implied coefficient of determination of the slab prior."""
    if not gamma2 > 0:
        raise ValueError("gamma2 must be positive")
    t = q * k * gamma2 * _vbar_value(vbar)
    return t / (t + 1.0)


def gamma2_from_r2_q(r2: float, q: float, k: int, vbar) -> float:
    """Invert the r2 map for the slab scale gamma2.

    Requires 0 < r2 < 1 and 0 < q <= 1; grids must avoid the closed
    boundaries where the map degenerates.
    """
    if not 0.0 < r2 < 1.0:
        raise ValueError("r2 must lie strictly inside (0, 1)")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    return r2 / ((1.0 - r2) * q * k * _vbar_value(vbar))


def grid_midpoints(m: int) -> np.ndarray:
    """Cell midpoints of a uniform m-cell partition of (0, 1)."""
    if m < 2:
        raise ValueError("grid needs at least 2 cells")
    return (np.arange(m) + 0.5) / m


@dataclass(frozen=True)
class ChainState:
    """One Gibbs iteration's full parameter state."""

    z: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    sigma2: float
    q: float
    r2: float
    gamma2: float
    lambda2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", _frozen_array(self.z, dtype=np.int8))
        object.__setattr__(self, "beta", _frozen_array(self.beta))
        object.__setattr__(self, "phi", _frozen_array(self.phi))
        object.__setattr__(self, "lambda2", _frozen_array(self.lambda2))

    def check(self, k: int, vbar, family: str = GAUSSIAN) -> None:
        """Assert the state invariants; used by tests and debug runs."""
        assert self.z.shape == (k,)
        assert set(np.unique(self.z)).issubset({0, 1})
        assert np.all(self.beta[self.z == 0] == 0.0), "inactive beta must be exactly 0"
        assert np.all(self.beta[self.z == 1] != 0.0), "active beta must be nonzero"
        assert self.sigma2 > 0
        assert 0.0 < self.q < 1.0
        assert 0.0 < self.r2 < 1.0
        implied = gamma2_from_r2_q(self.r2, self.q, k, vbar)
        assert abs(self.gamma2 - implied) <= 1e-12 * implied, "gamma2 out of sync with (q, r2)"
        assert np.all(self.lambda2 > 0)
        if family == GAUSSIAN:
            assert np.all(self.lambda2 == 1.0), "gaussian family keeps lambda2 pinned at 1"


# ---------------------------------------------------------------------------
# Slab moment facts (prior sanity checks and reporting)

@dataclass(frozen=True)
class GaussianSlab:
    lambda_r: float


@dataclass(frozen=True)
class LaplaceSlab:
    lambda_l: float


@dataclass(frozen=True)
class StudentTSlab:
    nu: float
    scale2: float = 1.0  # sigma2 * gamma2


def slab_moments(slab) -> tuple[float, float, float]:
    """(mean, variance, excess kurtosis) of a slab distribution.

    Gaussian(0, 1/lambda_r^2), Laplace(0, 2/lambda_l) with variance
    8/lambda_l^2, or Student-t(nu, scale2) with variance
    nu/(nu-2)*scale2 and infinite excess kurtosis for nu <= 4.
    """
    if isinstance(slab, GaussianSlab):
        if not slab.lambda_r > 0:
            raise ValueError("lambda_r must be positive")
        return 0.0, 1.0 / slab.lambda_r ** 2, 0.0
    if isinstance(slab, LaplaceSlab):
        if not slab.lambda_l > 0:
            raise ValueError("lambda_l must be positive")
        return 0.0, 8.0 / slab.lambda_l ** 2, 3.0
    if isinstance(slab, StudentTSlab):
        if not slab.nu > 2:
            raise ValueError("student-t slab needs nu > 2 for a finite variance")
        if not slab.scale2 > 0:
            raise ValueError("scale2 must be positive")
        var = slab.nu / (slab.nu - 2.0) * slab.scale2
        kurt = 6.0 / (slab.nu - 4.0) if slab.nu > 4 else math.inf
        return 0.0, var, kurt
    raise TypeError(f"unknown slab description: {slab!r}")
