"""Systematic-scan Gibbs sampler with collapsed inclusion flips.

One sweep visits, in order:

  1. update_z        - each z_i resampled from its Bernoulli conditional
                       with (beta, phi, sigma2) integrated out, prior
                       odds q/(1-q) times the single-flip Bayes factor;
  2. sigma2 | z      - collapsed redraw, InverseGamma((n-l)/2, SSR/2).
                       Required for exact invariance: the collapsed scan
                       defers the (sigma2, phi, beta) part of its block
                       draw, and the deferred components must be redrawn
                       from their joint conditional given the new z
                       before anything reads them. Skipping this and
                       drawing (phi, beta) against the stale sigma2
                       leaves a measurable stationary bias.
  3. update_beta_phi - joint Gaussian draw of (phi, beta_active);
  4. update_sigma2   - conjugate InverseGamma given the coefficients;
  5. update_lambda2  - Student-t family only: per-coefficient latent
                       scales, active from the conjugate conditional,
                       inactive refreshed from the prior;
  6. update_q_r2     - joint draw of (q, r2) on a midpoint grid, then a
                       deterministic gamma2 refresh.

Scan order over i is fixed ascending for reproducibility. All draws
come from one numpy Generator per chain, so a chain is a pure function
of (data, spec).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.special import expit

from .marginal import (
    CollapsedGram,
    MarginalWorkspace,
    NumericalDegeneracyError,
    _chol_with_jitter,
)
from .model_core import (
    GAUSSIAN,
    STUDENT_T,
    ChainState,
    Dataset,
    SlabSpec,
    VbarX,
    compute_vbar,
    gamma2_from_r2_q,
    grid_midpoints,
)


@dataclass(frozen=True)
class ChainSchedule:
    """Iteration bookkeeping; the scan order over i is fixed ascending."""

    n_iter: int
    n_burn: int
    thin: int

    @classmethod
    def from_spec(cls, spec: SlabSpec) -> "ChainSchedule":
        return cls(n_iter=spec.n_iter, n_burn=spec.n_burn, thin=spec.thin)

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin

    def records(self, t: int) -> bool:
        return t > self.n_burn and (t - self.n_burn) % self.thin == 0


@dataclass(frozen=True)
class SamplerPriors:
    """Internal sigma2 prior knobs.

    (a0, b0) = (0, 0) is the production improper 1/sigma2 prior; the
    sampler-correctness harness substitutes a proper InverseGamma(a0/2,
    b0/2) because an improper prior cannot be forward simulated.
    sigma2_shape_extra exists solely so the harness can inject a shape
    corruption and verify it gets caught.
    """

    a0: float = 0.0
    b0: float = 0.0
    sigma2_shape_extra: float = 0.0


JEFFREYS = SamplerPriors()


class TraceStore:
    """Thinned post-burn-in draws of one chain, append-only."""

    FIELDS = ("iters", "z", "beta", "sigma2", "q", "r2", "gamma2")

    def __init__(self, n_draws: int, k: int):
        self.k = k
        self.iters = np.zeros(n_draws, dtype=np.int64)
        self.z = np.zeros((n_draws, k), dtype=np.uint8)
        self.beta = np.zeros((n_draws, k))
        self.sigma2 = np.zeros(n_draws)
        self.q = np.zeros(n_draws)
        self.r2 = np.zeros(n_draws)
        self.gamma2 = np.zeros(n_draws)
        self._m = 0

    def append(self, it, z, beta, sigma2, q, r2, gamma2) -> None:
        m = self._m
        if m >= self.iters.size:
            raise IndexError("trace store is full")
        self.iters[m] = it
        self.z[m] = z
        self.beta[m] = beta
        self.sigma2[m] = sigma2
        self.q[m] = q
        self.r2[m] = r2
        self.gamma2[m] = gamma2
        self._m = m + 1

    @property
    def n_draws(self) -> int:
        return self._m

    def inclusion(self) -> np.ndarray:
        """Per-predictor posterior inclusion probability."""
        if self._m == 0:
            raise ValueError("empty trace")
        return self.z[: self._m].mean(axis=0)

    @classmethod
    def concat(cls, traces) -> "TraceStore":
        traces = list(traces)
        if not traces:
            raise ValueError("nothing to concatenate")
        k = traces[0].k
        if any(t.k != k for t in traces):
            raise ValueError("traces disagree on the number of predictors")
        out = cls(sum(t.n_draws for t in traces), k)
        for t in traces:
            for m in range(t.n_draws):
                out.append(t.iters[m], t.z[m], t.beta[m], t.sigma2[m],
                           t.q[m], t.r2[m], t.gamma2[m])
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceStore):
            return NotImplemented
        if self.n_draws != other.n_draws or self.k != other.k:
            return False
        m = self.n_draws
        return all(
            np.array_equal(getattr(self, f)[:m], getattr(other, f)[:m])
            for f in self.FIELDS
        )


class _Kernel:
    """Per-chain sampler context: precomputed tables plus the sweep.

    Strictly sequential; chains never share a kernel. Raw (unprojected)
    cross-products feed the coefficient draw, projected ones feed the
    collapsed flips.
    """

    def __init__(self, y, X, U, *, family, nu, grid_q, grid_r2, rng,
                 priors: SamplerPriors = JEFFREYS, vbar=None):
        self.y = np.asarray(y, dtype=float)
        self.X = np.asarray(X, dtype=float)
        self.U = np.asarray(U, dtype=float)
        self.n, self.k = self.X.shape
        self.l = self.U.shape[1]
        self.family = family
        self.nu = nu
        self.rng = rng
        self.priors = priors
        data = Dataset(self.y, self.X, self.U, tuple(f"x{j}" for j in range(self.k)))
        self.gram = CollapsedGram.build(data)
        if vbar is None:
            vbar = compute_vbar(data, family, nu) if self.n >= 2 else VbarX(1.0)
        self.vbar = float(vbar)
        # raw tables for the (phi, beta) conditional
        self.UtU = self.U.T @ self.U
        self.UtX = self.U.T @ self.X
        self.Uty = self.U.T @ self.y
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ self.y
        # (q, r2) grid tables; gamma2(q, r2) = cb / q on midpoints
        self.qm = grid_midpoints(grid_q)
        self.rm = grid_midpoints(grid_r2)
        self.logq = np.log(self.qm)
        self.log1q = np.log1p(-self.qm)
        self.cb = self.rm / ((1.0 - self.rm) * self.k * self.vbar)
        self.logcb = np.log(self.cb)
        self.qa_over_cb = self.qm[:, None] / self.cb[None, :]

    # -- pieces -------------------------------------------------------

    def initial_state(self) -> ChainState:
        """Neutral start: empty model, unit scales, grid-median (q, r2)."""
        q = float(self.qm[len(self.qm) // 2])
        r2 = float(self.rm[len(self.rm) // 2])
        return ChainState(
            z=np.zeros(self.k, dtype=np.int8),
            beta=np.zeros(self.k),
            phi=np.zeros(self.l),
            sigma2=1.0,
            q=q,
            r2=r2,
            gamma2=gamma2_from_r2_q(r2, q, self.k, self.vbar),
            lambda2=np.ones(self.k),
        )

    def scan_z(self, z, q, gamma2, lambda2, ws=None) -> np.ndarray:
        """One ascending collapsed scan; mutates and returns z."""
        if ws is None:
            ws = MarginalWorkspace(
                self.gram, gamma2, lambda2, active=np.flatnonzero(z),
                sigma2_prior=(self.priors.a0, self.priors.b0),
            )
        logit_q = math.log(q) - math.log1p(-q)
        us = self.rng.random(self.k)
        for i in range(self.k):
            p = expit(logit_q + ws.log_bf(i))
            want = us[i] < p
            if want and not z[i]:
                ws.include(i)
                z[i] = 1
            elif not want and z[i]:
                ws.exclude(i)
                z[i] = 0
        self._ws = ws
        return z

    def draw_sigma2_collapsed(self, ws: MarginalWorkspace) -> float:
        """sigma2 | z with the coefficients integrated out."""
        shape = 0.5 * (self.n - self.l + self.priors.a0)
        rate = 0.5 * (ws.ssr + self.priors.b0)
        return rate / self.rng.gamma(shape)

    def draw_beta_phi(self, z, sigma2, gamma2, lambda2):
        """Joint draw of (phi, beta_active) from the Gaussian conditional."""
        idx = np.flatnonzero(z)
        s = idx.size
        l = self.l
        beta = np.zeros(self.k)
        if l + s == 0:
            return np.zeros(0), beta
        P = np.empty((l + s, l + s))
        rhs = np.empty(l + s)
        P[:l, :l] = self.UtU
        P[:l, l:] = self.UtX[:, idx]
        P[l:, :l] = self.UtX[:, idx].T
        P[l:, l:] = self.XtX[np.ix_(idx, idx)] + np.diag(1.0 / (gamma2 * lambda2[idx]))
        rhs[:l] = self.Uty
        rhs[l:] = self.Xty[idx]
        L = _chol_with_jitter(P, idx)
        half = scipy.linalg.solve_triangular(L, rhs, lower=True, check_finite=False)
        mean = scipy.linalg.solve_triangular(L.T, half, lower=False, check_finite=False)
        noise = scipy.linalg.solve_triangular(
            L.T, self.rng.standard_normal(l + s), lower=False, check_finite=False
        )
        draw = mean + math.sqrt(sigma2) * noise
        phi = draw[:l]
        beta[idx] = draw[l:]
        return phi, beta

    def draw_sigma2(self, z, beta, phi, gamma2, lambda2) -> float:
        """sigma2 | coefficients: InverseGamma((n+s)/2, (RSS + prior)/2)."""
        resid = self.y - self.X @ beta
        if self.l:
            resid = resid - self.U @ phi
        rss = float(resid @ resid)
        idx = np.flatnonzero(z)
        prior_term = float(np.sum(beta[idx] ** 2 / (gamma2 * lambda2[idx]))) if idx.size else 0.0
        s = idx.size
        shape = 0.5 * (self.n + s + self.priors.a0) + self.priors.sigma2_shape_extra
        rate = 0.5 * (rss + prior_term + self.priors.b0)
        assert rate > 0, "sigma2 rate must be positive by construction"
        return rate / self.rng.gamma(shape)

    def draw_lambda2(self, z, beta, sigma2, gamma2) -> np.ndarray:
        """Latent scales: conjugate for active i, prior refresh otherwise."""
        nu = self.nu
        shapes = 0.5 * (nu + z)
        rates = 0.5 * (nu + beta ** 2 / (sigma2 * gamma2))
        return rates / self.rng.gamma(shapes)

    def draw_q_r2(self, z, beta, sigma2, lambda2):
        """Joint (q, r2) draw on the midpoint grid; returns (q, r2, gamma2).

        Cell log weight: s log q + (k - s) log(1 - q)
        + sum_active log N(beta_i; 0, sigma2 gamma2(q, r2) lambda2_i),
        with cell-independent terms dropped.
        """
        idx = np.flatnonzero(z)
        s = idx.size
        avec = (1.5 * s) * self.logq + (self.k - s) * self.log1q
        bvec = (-0.5 * s) * self.logcb
        W = avec[:, None] + bvec[None, :]
        if s:
            sb = float(np.sum(beta[idx] ** 2 / lambda2[idx]))
            W = W - (sb / (2.0 * sigma2)) * self.qa_over_cb
        W -= W.max()
        w = np.exp(W).ravel()
        total = w.sum()
        assert total >= 1.0, "max-subtracted weights cannot all underflow"
        r = self.rng.random() * total
        cell = int(np.searchsorted(np.cumsum(w), r))
        cell = min(cell, w.size - 1)
        ai, bi = divmod(cell, self.rm.size)
        q = float(self.qm[ai])
        r2 = float(self.rm[bi])
        return q, r2, gamma2_from_r2_q(r2, q, self.k, self.vbar)

    # -- one sweep ----------------------------------------------------

    def sweep(self, st: dict) -> None:
        z = self.scan_z(st["z"], st["q"], st["gamma2"], st["lambda2"])
        st["sigma2"] = self.draw_sigma2_collapsed(self._ws)
        st["phi"], st["beta"] = self.draw_beta_phi(
            z, st["sigma2"], st["gamma2"], st["lambda2"]
        )
        st["sigma2"] = self.draw_sigma2(
            z, st["beta"], st["phi"], st["gamma2"], st["lambda2"]
        )
        if self.family == STUDENT_T:
            st["lambda2"] = self.draw_lambda2(z, st["beta"], st["sigma2"], st["gamma2"])
        st["q"], st["r2"], st["gamma2"] = self.draw_q_r2(
            z, st["beta"], st["sigma2"], st["lambda2"]
        )

    def set_response(self, y) -> None:
        """Swap the response in place (correctness-harness use; l = 0)."""
        if self.l:
            raise ValueError("response swap only supported without always-included columns")
        self.y = np.asarray(y, dtype=float)
        self.Xty = self.X.T @ self.y
        # l = 0 means no projection: the gram only changes through (g, ymy)
        self.gram = CollapsedGram(
            G=self.gram.G, g=self.Xty, ymy=float(self.y @ self.y),
            n=self.n, l=0,
        )


def _kernel_for(data: Dataset, spec: SlabSpec, rng, priors=JEFFREYS) -> _Kernel:
    return _Kernel(
        data.y, data.X, data.U,
        family=spec.family, nu=spec.nu,
        grid_q=spec.grid_q, grid_r2=spec.grid_r2,
        rng=rng, priors=priors,
    )


def _state_dict(state: ChainState) -> dict:
    return {
        "z": np.array(state.z, dtype=np.int8),
        "beta": np.array(state.beta),
        "phi": np.array(state.phi),
        "sigma2": state.sigma2,
        "q": state.q,
        "r2": state.r2,
        "gamma2": state.gamma2,
        "lambda2": np.array(state.lambda2),
    }


def _state_from_dict(st: dict) -> ChainState:
    return ChainState(
        z=st["z"], beta=st["beta"], phi=st["phi"], sigma2=float(st["sigma2"]),
        q=float(st["q"]), r2=float(st["r2"]), gamma2=float(st["gamma2"]),
        lambda2=st["lambda2"],
    )


# ---------------------------------------------------------------------------
# Public single-step operations (contract level; run_chain uses the kernel)

def initial_state(data: Dataset, spec: SlabSpec) -> ChainState:
    rng = np.random.default_rng(spec.seed)
    return _kernel_for(data, spec, rng).initial_state()


def update_z(state: ChainState, data: Dataset, rng, *, family=GAUSSIAN, nu=None,
             priors: SamplerPriors = JEFFREYS) -> ChainState:
    """Collapsed systematic scan over the inclusion indicators.

    beta is deliberately left stale (the flip never reads it); refresh
    with update_beta_phi before using the coefficients.
    """
    kern = _Kernel(data.y, data.X, data.U, family=family, nu=nu,
                   grid_q=2, grid_r2=2, rng=rng, priors=priors)
    st = _state_dict(state)
    kern.scan_z(st["z"], st["q"], st["gamma2"], st["lambda2"])
    return _state_from_dict(st)


def update_sigma2_collapsed(state: ChainState, data: Dataset, rng,
                            priors: SamplerPriors = JEFFREYS) -> ChainState:
    """sigma2 | z with coefficients integrated out (the bridge draw)."""
    kern = _Kernel(data.y, data.X, data.U, family=GAUSSIAN, nu=None,
                   grid_q=2, grid_r2=2, rng=rng, priors=priors)
    ws = MarginalWorkspace(kern.gram, state.gamma2, state.lambda2,
                           active=np.flatnonzero(state.z),
                           sigma2_prior=(priors.a0, priors.b0))
    st = _state_dict(state)
    st["sigma2"] = kern.draw_sigma2_collapsed(ws)
    return _state_from_dict(st)


def update_beta_phi(state: ChainState, data: Dataset, rng) -> ChainState:
    """Joint Gaussian draw of (phi, beta_active); inactive beta_i = 0."""
    kern = _Kernel(data.y, data.X, data.U, family=GAUSSIAN, nu=None,
                   grid_q=2, grid_r2=2, rng=rng)
    st = _state_dict(state)
    st["phi"], st["beta"] = kern.draw_beta_phi(
        st["z"], st["sigma2"], st["gamma2"], st["lambda2"]
    )
    return _state_from_dict(st)


def update_sigma2(state: ChainState, data: Dataset, rng,
                  priors: SamplerPriors = JEFFREYS) -> ChainState:
    kern = _Kernel(data.y, data.X, data.U, family=GAUSSIAN, nu=None,
                   grid_q=2, grid_r2=2, rng=rng, priors=priors)
    st = _state_dict(state)
    st["sigma2"] = kern.draw_sigma2(
        st["z"], st["beta"], st["phi"], st["gamma2"], st["lambda2"]
    )
    return _state_from_dict(st)


def update_lambda2(state: ChainState, nu: float, rng) -> ChainState:
    """Latent scale refresh for the Student-t family.

    Active i: InverseGamma((nu+1)/2, (nu + beta_i^2/(sigma2 gamma2))/2).
    Inactive i: prior refresh InverseGamma(nu/2, nu/2), so the next
    collapsed scan proposes inclusion against a properly distributed
    scale.
    """
    if not nu > 2:
        raise ValueError("nu must exceed 2")
    shapes = 0.5 * (nu + np.asarray(state.z, dtype=float))
    rates = 0.5 * (nu + np.asarray(state.beta) ** 2 / (state.sigma2 * state.gamma2))
    lam = rates / rng.gamma(shapes)
    st = _state_dict(state)
    st["lambda2"] = lam
    return _state_from_dict(st)


def update_q_r2(state: ChainState, data: Dataset, grid_q: int, grid_r2: int,
                rng, *, family=GAUSSIAN, nu=None) -> ChainState:
    kern = _Kernel(data.y, data.X, data.U, family=family, nu=nu,
                   grid_q=grid_q, grid_r2=grid_r2, rng=rng)
    st = _state_dict(state)
    st["q"], st["r2"], st["gamma2"] = kern.draw_q_r2(
        st["z"], st["beta"], st["sigma2"], st["lambda2"]
    )
    return _state_from_dict(st)


# ---------------------------------------------------------------------------
# Chain driver

def run_chain(data: Dataset, spec: SlabSpec, *, priors: SamplerPriors = JEFFREYS,
              validate_draws: bool = False) -> TraceStore:
    """Run one chain and return the thinned post-burn-in trace.

    Deterministic given spec.seed. Step errors are re-raised with the
    failing sweep index attached.
    """
    rng = np.random.default_rng(spec.seed)
    kern = _kernel_for(data, spec, rng, priors)
    sched = ChainSchedule.from_spec(spec)
    st = _state_dict(kern.initial_state())
    trace = TraceStore(sched.n_draws, data.k)
    for t in range(1, sched.n_iter + 1):
        try:
            kern.sweep(st)
        except NumericalDegeneracyError as e:
            raise NumericalDegeneracyError(
                f"sweep {t}: {e}", e.active_indices, sweep=t
            ) from e
        if sched.records(t):
            if validate_draws:
                _state_from_dict(st).check(data.k, kern.vbar, spec.family)
            trace.append(t, st["z"], st["beta"], st["sigma2"],
                         st["q"], st["r2"], st["gamma2"])
    return trace


def _run_indexed_chain(args):
    data, spec, index = args
    return index, run_chain(data, replace(spec, seed=spec.seed + index))


def run_chains(data: Dataset, spec: SlabSpec, n_chains: int = 1,
               n_jobs: int = 1) -> list[TraceStore]:
    """Independent chains seeded base + chain index; merge only afterwards.

    Results are ordered by chain index and identical for any n_jobs.
    """
    if n_chains < 1:
        raise ValueError("need at least one chain")
    jobs = [(data, spec, c) for c in range(n_chains)]
    if n_jobs <= 1 or n_chains == 1:
        results = [_run_indexed_chain(j) for j in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(n_jobs, n_chains)) as pool:
            results = list(pool.map(_run_indexed_chain, jobs))
    results.sort(key=lambda pair: pair[0])
    return [t for _, t in results]
