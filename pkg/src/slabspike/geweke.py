"""Joint-distribution correctness test for the Gibbs sampler.

Two ways of sampling the joint law of (parameters, data) must agree:

  marginal-conditional   draw parameters from the prior, then data given
                         parameters, independently each time;
  successive-conditional alternate one full Gibbs sweep on the
                         parameters with a regeneration of the data given
                         the current parameters.

If the sweep leaves the posterior invariant for every dataset, both
streams share the distribution of any parameter functional. The harness
tracks first and second moments of (q, r2, sigma2, s) and reports
standardized differences; |g| above ~4 flags a broken update.

The production sigma2 prior is the improper 1/sigma2, which cannot be
forward simulated, so the harness runs the same kernel under a proper
InverseGamma(6, 5) substitute. The flat prior on always-included
coefficients is improper too; the harness requires l = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gibbs import SamplerPriors, _Kernel
from .model_core import STUDENT_T, SlabSpec, grid_midpoints

# proper sigma2 prior for forward simulation: InverseGamma(a0/2, b0/2)
_A0 = 12.0
_B0 = 10.0


@dataclass(frozen=True)
class GewekeRow:
    stat: str
    mc_mean: float
    sc_mean: float
    se: float
    g: float


@dataclass(frozen=True)
class GewekeReport:
    rows: tuple[GewekeRow, ...]
    threshold: float
    n_draws: int

    @property
    def passed(self) -> bool:
        return all(abs(r.g) <= self.threshold for r in self.rows)

    def __str__(self) -> str:
        lines = [f"{'stat':<10} {'mc_mean':>12} {'sc_mean':>12} {'se':>10} {'g':>8}"]
        for r in self.rows:
            lines.append(
                f"{r.stat:<10} {r.mc_mean:>12.5f} {r.sc_mean:>12.5f} "
                f"{r.se:>10.5f} {r.g:>8.2f}"
            )
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict} (|g| threshold {self.threshold}, {self.n_draws} draws)")
        return "\n".join(lines)


def _batch_means_se(x: np.ndarray, n_batches: int = 100) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    m = len(x)
    n_batches = min(n_batches, max(2, m // 10))
    usable = (m // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(n_batches))


def _track(q, r2, sigma2, s):
    return (q, q * q, r2, r2 * r2, sigma2, sigma2 * sigma2, s, s * s)


_STAT_NAMES = ("q", "q^2", "r2", "r2^2", "sigma2", "sigma2^2", "s", "s^2")


def geweke_joint_test(
    data_shape: tuple[int, int, int],
    spec: SlabSpec,
    n_draws: int = 100_000,
    *,
    corrupt_sigma2: bool = False,
    threshold: float = 4.0,
) -> GewekeReport:
    """Run both simulators and report standardized moment differences.

    data_shape is (n, k, l) with l = 0 (small shapes; n <= 30, k <= 8
    keeps the run cheap). n = 0 yields a prior-only chain: the data step
    is empty and the sweep must reproduce the prior exactly.
    corrupt_sigma2 doubles the n/2 term of the sigma2 conditional's
    shape, a deliberate bug the test must flag.
    """
    n, k, l = data_shape
    if l != 0:
        raise ValueError(
            "joint test requires l = 0: the flat prior on always-included "
            "coefficients cannot be forward simulated"
        )
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((n, k))
    if n >= 2:
        X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    U = np.zeros((n, 0))

    priors = SamplerPriors(
        a0=_A0, b0=_B0,
        sigma2_shape_extra=(n / 2.0 if corrupt_sigma2 else 0.0),
    )
    nu = spec.nu if spec.family == STUDENT_T else None
    kern = _Kernel(
        np.zeros(n), X, U, family=spec.family, nu=nu,
        grid_q=spec.grid_q, grid_r2=spec.grid_r2, rng=rng, priors=priors,
    )
    qm = grid_midpoints(spec.grid_q)
    rm = grid_midpoints(spec.grid_r2)

    def prior_draw():
        q = float(qm[rng.integers(spec.grid_q)])
        r2 = float(rm[rng.integers(spec.grid_r2)])
        gamma2 = r2 / ((1.0 - r2) * q * k * kern.vbar)
        if nu is not None:
            lam = (nu / 2.0) / rng.gamma(nu / 2.0, size=k)
        else:
            lam = np.ones(k)
        z = (rng.random(k) < q).astype(np.int8)
        sigma2 = (_B0 / 2.0) / rng.gamma(_A0 / 2.0)
        beta = np.where(
            z, rng.standard_normal(k) * np.sqrt(sigma2 * gamma2 * lam), 0.0
        )
        return {"z": z, "beta": beta, "phi": np.zeros(0), "sigma2": sigma2,
                "q": q, "r2": r2, "gamma2": gamma2, "lambda2": lam}

    # marginal-conditional stream: iid prior draws
    mc = np.empty((n_draws, len(_STAT_NAMES)))
    for m in range(n_draws):
        st = prior_draw()
        mc[m] = _track(st["q"], st["r2"], st["sigma2"], int(st["z"].sum()))

    # successive-conditional stream: regenerate data, then one sweep
    sc = np.empty_like(mc)
    st = prior_draw()
    for m in range(n_draws):
        y = X @ st["beta"] + np.sqrt(st["sigma2"]) * rng.standard_normal(n)
        kern.set_response(y)
        kern.sweep(st)
        sc[m] = _track(st["q"], st["r2"], st["sigma2"], int(st["z"].sum()))

    rows = []
    for j, name in enumerate(_STAT_NAMES):
        mc_mean = float(mc[:, j].mean())
        sc_mean = float(sc[:, j].mean())
        se_mc = float(mc[:, j].std(ddof=1) / np.sqrt(n_draws))
        se_sc = _batch_means_se(sc[:, j])
        se = float(np.hypot(se_mc, se_sc))
        g = (mc_mean - sc_mean) / se if se > 0 else 0.0
        rows.append(GewekeRow(name, mc_mean, sc_mean, se, g))
    return GewekeReport(tuple(rows), threshold, n_draws)
