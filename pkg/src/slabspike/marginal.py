"""Collapsed log marginal likelihoods with beta (and sigma2) integrated out.

With M_U the residual projector removing the always-included block U
(the identity when l = 0), D = diag(gamma2 * lambda2_i) over the active
columns X_A, A = X_A' M_U X_A + D^-1 and
SSR = y' M_U y - y' M_U X_A A^-1 X_A' M_U y, the log marginal of an
inclusion pattern is, up to an additive constant that does not depend on
the pattern,

    -1/2 sum_A log(gamma2 * lambda2_i) - 1/2 logdet A - (n - l)/2 log SSR.

The flat prior on the always-included coefficients is handled exactly by
projection (the (n - l) exponent counts the dimensions it absorbs); the
improper 1/sigma2 prior integrates to the SSR power term. The optional
(a0, b0) pair generalizes to a proper InverseGamma(a0/2, b0/2) prior on
sigma2 (exponent (n - l + a0)/2, SSR + b0); the default (0, 0) is the
production configuration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model_core import Dataset

_JITTER_REL = 1e-10


class NumericalDegeneracyError(RuntimeError):
    """Factorization failure or nonpositive SSR; carries the active set."""

    def __init__(self, message: str, active_indices=(), sweep: int | None = None):
        self.active_indices = tuple(int(i) for i in active_indices)
        self.sweep = sweep
        super().__init__(message)


@dataclass(frozen=True)
class ActiveSet:
    """Included predictor indices with their latent scales lambda2."""

    indices: tuple[int, ...]
    scales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if len(self.indices) != len(self.scales):
            raise ValueError("indices and scales must align")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if any(i < 0 for i in self.indices):
            raise ValueError("indices must be nonnegative")
        if any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")

    @classmethod
    def from_state(cls, z, lambda2) -> "ActiveSet":
        idx = np.flatnonzero(np.asarray(z) != 0)
        lam = np.asarray(lambda2, dtype=float)
        return cls(tuple(int(i) for i in idx), tuple(lam[idx]))

    def __len__(self) -> int:
        return len(self.indices)


def residual_projector_basis(U: np.ndarray) -> np.ndarray | None:
    """Orthonormal basis Q of span(U); None when U is empty.

    The projector M_U acts as v -> v - Q (Q'v).
    """
    if U.shape[1] == 0:
        return None
    Q, R = np.linalg.qr(U)
    if np.any(np.abs(np.diag(R)) < 1e-12 * max(1.0, float(np.abs(R).max()))):
        raise NumericalDegeneracyError("always-included block is rank deficient")
    return Q


@dataclass(frozen=True)
class CollapsedGram:
    """Projected cross-products reused by every marginal evaluation.

    G = X' M_U X, g = X' M_U y, ymy = y' M_U y.
    """

    G: np.ndarray
    g: np.ndarray
    ymy: float
    n: int
    l: int

    @classmethod
    def build(cls, data: Dataset) -> "CollapsedGram":
        Q = residual_projector_basis(data.U)
        if Q is None:
            Xt, yt = data.X, data.y
        else:
            Xt = data.X - Q @ (Q.T @ data.X)
            yt = data.y - Q @ (Q.T @ data.y)
        return cls(G=Xt.T @ Xt, g=Xt.T @ yt, ymy=float(yt @ yt), n=data.n, l=data.l)


def _chol_with_jitter(A: np.ndarray, active_indices) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a trace-scaled jitter."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_REL * np.trace(A) / A.shape[0]
    try:
        return np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
    except np.linalg.LinAlgError:
        raise NumericalDegeneracyError(
            f"cholesky failed after jitter {jitter:g}", active_indices
        ) from None


def _collapsed_pieces(gram: CollapsedGram, active: ActiveSet, gamma2: float):
    """(sum log d, logdet A, SSR) for the active set; exact for s = 0."""
    idx = np.asarray(active.indices, dtype=int)
    s = idx.size
    if s == 0:
        return 0.0, 0.0, gram.ymy
    d = gamma2 * np.asarray(active.scales)
    A = gram.G[np.ix_(idx, idx)] + np.diag(1.0 / d)
    L = _chol_with_jitter(A, active.indices)
    b = gram.g[idx]
    c = scipy.linalg.solve_triangular(L, b, lower=True, check_finite=False)
    ssr = gram.ymy - float(c @ c)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(np.sum(np.log(d))), logdet, ssr


def log_marginal(
    data: Dataset,
    active: ActiveSet,
    gamma2: float,
    sigma2_prior: tuple[float, float] = (0.0, 0.0),
) -> float:
    """Log marginal likelihood of an inclusion pattern, up to a constant.

    The constant omitted is independent of the pattern; use
    `log_marginal_norm_const` to recover the full value when l = 0.
    """
    if not gamma2 > 0:
        raise ValueError("gamma2 must be positive")
    gram = CollapsedGram.build(data)
    return _log_marginal_from_gram(gram, active, gamma2, sigma2_prior)


def _log_marginal_from_gram(gram, active, gamma2, sigma2_prior=(0.0, 0.0)) -> float:
    a0, b0 = sigma2_prior
    sumlogd, logdet, ssr = _collapsed_pieces(gram, active, gamma2)
    if ssr + b0 <= 0:
        raise NumericalDegeneracyError(
            f"nonpositive SSR ({ssr:g})", active.indices
        )
    expo = 0.5 * (gram.n - gram.l + a0)
    return -0.5 * sumlogd - 0.5 * logdet - expo * math.log(ssr + b0)


def log_marginal_norm_const(n: int) -> float:
    """Additive constant completing `log_marginal` when l = 0."""
    return -(n / 2.0) * math.log(math.pi) + math.lgamma(n / 2.0)


def log_bayes_factor(
    data: Dataset,
    active_without_i: ActiveSet,
    i: int,
    lambda2_i: float,
    gamma2: float,
) -> float:
    """Log Bayes factor for adding predictor i to an active set.

    Equal to log_marginal(with i) - log_marginal(without i), computed
    from one factorization of the smaller system plus its bordered
    extension instead of two full evaluations.
    """
    if i in active_without_i.indices:
        raise ValueError(f"predictor {i} already active")
    gram = CollapsedGram.build(data)
    a0, b0 = 0.0, 0.0
    idx = np.asarray(active_without_i.indices, dtype=int)
    di = gamma2 * lambda2_i
    alpha = gram.G[i, i] + 1.0 / di
    if idx.size == 0:
        sc = alpha
        ssr_old = gram.ymy
        xi_num = gram.g[i]
    else:
        d = gamma2 * np.asarray(active_without_i.scales)
        A = gram.G[np.ix_(idx, idx)] + np.diag(1.0 / d)
        L = _chol_with_jitter(A, active_without_i.indices)
        b = gram.g[idx]
        c = scipy.linalg.solve_triangular(L, b, lower=True, check_finite=False)
        a = gram.G[idx, i]
        w = scipy.linalg.solve_triangular(L, a, lower=True, check_finite=False)
        sc = alpha - float(w @ w)
        ssr_old = gram.ymy - float(c @ c)
        xi_num = gram.g[i] - float(w @ c)
    if sc <= 0:
        raise NumericalDegeneracyError(
            f"nonpositive bordered pivot ({sc:g})", tuple(idx) + (i,)
        )
    ssr_new = ssr_old - xi_num * xi_num / sc
    if ssr_new + b0 <= 0 or ssr_old + b0 <= 0:
        raise NumericalDegeneracyError(
            f"nonpositive SSR ({ssr_new:g})", tuple(idx) + (i,)
        )
    expo = 0.5 * (gram.n - gram.l + a0)
    return (
        -0.5 * math.log(di)
        - 0.5 * math.log(sc)
        - expo * (math.log(ssr_new + b0) - math.log(ssr_old + b0))
    )


class MarginalWorkspace:
    """Chain-confined cache for single-flip Bayes factors.

    Holds V = A^-1, u = A^-1 b, logdet A and SSR over the current active
    set (in insertion order) and updates them in O(s^2) per flip via
    bordered-inverse identities. State drift is bounded by a full rebuild
    every `rebuild_every` mutations. Not safe to share across chains.
    """

    def __init__(
        self,
        gram: CollapsedGram,
        gamma2: float,
        lambda2: np.ndarray,
        active=(),
        sigma2_prior: tuple[float, float] = (0.0, 0.0),
        rebuild_every: int = 256,
    ):
        self.gram = gram
        self.gamma2 = float(gamma2)
        self.lambda2 = np.asarray(lambda2, dtype=float)
        self.a0, self.b0 = sigma2_prior
        self.expo = 0.5 * (gram.n - gram.l + self.a0)
        self.rebuild_every = rebuild_every
        self.order: list[int] = [int(i) for i in active]
        self._mutations = 0
        self.rebuild()

    # -- bookkeeping -------------------------------------------------

    def rebuild(self) -> None:
        """Recompute V, u, logdet, SSR from a fresh factorization."""
        idx = np.asarray(self.order, dtype=int)
        s = idx.size
        if s == 0:
            self.V = np.zeros((0, 0))
            self.u = np.zeros(0)
            self.logdet = 0.0
            self.ssr = self.gram.ymy
        else:
            d = self.gamma2 * self.lambda2[idx]
            A = self.gram.G[np.ix_(idx, idx)] + np.diag(1.0 / d)
            L = _chol_with_jitter(A, self.order)
            eye = np.eye(s)
            Linv = scipy.linalg.solve_triangular(L, eye, lower=True, check_finite=False)
            self.V = Linv.T @ Linv
            b = self.gram.g[idx]
            self.u = self.V @ b
            self.logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
            self.ssr = self.gram.ymy - float(b @ self.u)
        if self.ssr + self.b0 <= 0:
            raise NumericalDegeneracyError(
                f"nonpositive SSR ({self.ssr:g})", self.order
            )
        self._mutations = 0
        self._last_border = None

    def active_mask(self, k: int) -> np.ndarray:
        mask = np.zeros(k, dtype=bool)
        mask[self.order] = True
        return mask

    # -- queries -----------------------------------------------------

    def log_bf(self, i: int) -> float:
        """Log Bayes factor of including predictor i against excluding
        it, conditional on the rest of the current active set."""
        di = self.gamma2 * self.lambda2[i]
        if i in self.order:
            j = self.order.index(i)
            vjj = self.V[j, j]
            if vjj <= 0:
                raise NumericalDegeneracyError("lost positive definiteness", self.order)
            ssr_without = self.ssr + self.u[j] ** 2 / vjj
            return (
                -0.5 * math.log(di)
                + 0.5 * math.log(vjj)
                - self.expo * (math.log(self.ssr + self.b0) - math.log(ssr_without + self.b0))
            )
        sc, xi, ssr_new = self._border(i)
        return (
            -0.5 * math.log(di)
            - 0.5 * math.log(sc)
            - self.expo * (math.log(ssr_new + self.b0) - math.log(self.ssr + self.b0))
        )

    def _border(self, i: int):
        """Schur pivot, coefficient increment, and new SSR for adding i."""
        di = self.gamma2 * self.lambda2[i]
        alpha = self.gram.G[i, i] + 1.0 / di
        if self.order:
            idx = np.asarray(self.order, dtype=int)
            a = self.gram.G[idx, i]
            w = self.V @ a
            sc = alpha - float(a @ w)
            xi = (self.gram.g[i] - float(a @ self.u)) / sc
        else:
            w = np.zeros(0)
            sc = alpha
            xi = self.gram.g[i] / sc
        if sc <= 0:
            raise NumericalDegeneracyError(
                f"nonpositive bordered pivot ({sc:g})", self.order + [i]
            )
        ssr_new = self.ssr - xi * xi * sc
        if ssr_new + self.b0 <= 0:
            raise NumericalDegeneracyError(
                f"nonpositive SSR ({ssr_new:g})", self.order + [i]
            )
        self._last_border = (i, w, sc, xi, ssr_new)
        return sc, xi, ssr_new

    # -- mutations ---------------------------------------------------

    def include(self, i: int) -> None:
        if i in self.order:
            return
        cached = getattr(self, "_last_border", None)
        if cached is not None and cached[0] == i:
            _, w, sc, xi, ssr_new = cached
        else:
            self._border(i)
            _, w, sc, xi, ssr_new = self._last_border
        s = len(self.order)
        V = np.empty((s + 1, s + 1))
        if s:
            V[:s, :s] = self.V + np.outer(w, w) / sc
            V[:s, s] = -w / sc
            V[s, :s] = -w / sc
            self.u = np.concatenate([self.u - w * xi, [xi]])
        else:
            self.u = np.array([xi])
        V[s, s] = 1.0 / sc
        self.V = V
        self.logdet += math.log(sc)
        self.ssr = ssr_new
        self.order.append(i)
        self._last_border = None
        self._tick()

    def exclude(self, i: int) -> None:
        if i not in self.order:
            return
        j = self.order.index(i)
        vjj = self.V[j, j]
        if vjj <= 0:
            raise NumericalDegeneracyError("lost positive definiteness", self.order)
        v = np.delete(self.V[:, j], j)
        uj = self.u[j]
        self.V = np.delete(np.delete(self.V, j, axis=0), j, axis=1) - np.outer(v, v) / vjj
        self.u = np.delete(self.u, j) - v * (uj / vjj)
        self.logdet += math.log(vjj)
        self.ssr += uj * uj / vjj
        self.order.pop(j)
        self._last_border = None
        self._tick()

    def _tick(self):
        self._mutations += 1
        if self._mutations >= self.rebuild_every:
            self.rebuild()

    def log_marginal(self) -> float:
        """Collapsed log marginal of the current active set."""
        idx = np.asarray(self.order, dtype=int)
        sumlogd = float(np.sum(np.log(self.gamma2 * self.lambda2[idx]))) if idx.size else 0.0
        return -0.5 * sumlogd - 0.5 * self.logdet - self.expo * math.log(self.ssr + self.b0)
