"""Posterior summaries: inclusion probabilities, sign probabilities,
conditional coefficient densities, and heatmap matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .gibbs import TraceStore

CUTOFFS = (0.5, 0.75, 0.9)
KDE_MIN_DRAWS = 50
HIST_BINS = 10


@dataclass(frozen=True)
class DensityGrid:
    """Conditional coefficient density on a uniform grid.

    mode is "kde" (Gaussian kernels, Silverman bandwidth) or "histogram"
    (staircase over HIST_BINS bins, used below KDE_MIN_DRAWS draws). The
    grid values are renormalized so the trapezoid integral is 1.
    """

    mode: str
    x: np.ndarray
    y: np.ndarray
    bandwidth: float | None = None
    n_bins: int | None = None

    def integral(self) -> float:
        return float(np.trapezoid(self.y, self.x))


def density_estimate(draws, grid_size: int = 512) -> DensityGrid | None:
    """Density of the included-coefficient draws; None when there are none."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        return None
    if draws.size >= KDE_MIN_DRAWS and draws.std() > 0:
        kde = gaussian_kde(draws, bw_method="silverman")
        bw = float(kde.factor * draws.std(ddof=1))
        x = np.linspace(draws.min() - 3 * bw, draws.max() + 3 * bw, grid_size)
        y = kde(x)
        mode = "kde"
        n_bins = None
    elif draws.std() == 0:
        # degenerate sample: narrow Gaussian bump centered on the point
        c = float(draws[0])
        bw = 1e-3 * max(1.0, abs(c))
        x = np.linspace(c - 3 * bw, c + 3 * bw, grid_size)
        y = np.exp(-0.5 * ((x - c) / bw) ** 2) / (bw * math.sqrt(2 * math.pi))
        mode = "kde"
        n_bins = None
    else:
        heights, edges = np.histogram(draws, bins=HIST_BINS, density=True)
        x = np.linspace(edges[0], edges[-1], grid_size)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, HIST_BINS - 1)
        y = heights[idx]
        mode = "histogram"
        bw = None
        n_bins = HIST_BINS
    total = np.trapezoid(y, x)
    if total > 0:
        y = y / total
    return DensityGrid(mode=mode, x=x, y=y, bandwidth=bw, n_bins=n_bins)


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-predictor inclusion and sign probabilities plus densities.

    g0 is the probability of a positive coefficient among the draws that
    include the predictor; it is NaN (missing) when the predictor was
    never included, since the conditional is undefined. cutoffs counts
    predictors with inclusion probability strictly above each level.
    """

    inc: np.ndarray
    g0: np.ndarray
    n_included: np.ndarray
    densities: tuple
    cutoffs: dict
    n_draws: int


def summarize(trace: TraceStore, grid_size: int = 512) -> PosteriorSummary:
    """Pure function of the trace; recomputation is bit-identical."""
    m = trace.n_draws
    if m == 0:
        raise ValueError("empty trace")
    z = trace.z[:m]
    beta = trace.beta[:m]
    inc = z.mean(axis=0)
    k = trace.k
    g0 = np.full(k, np.nan)
    n_inc = z.sum(axis=0).astype(int)
    densities = []
    for i in range(k):
        included = beta[z[:, i] == 1, i]
        if included.size:
            g0[i] = float((included > 0).mean())
        densities.append(density_estimate(included, grid_size))
    cutoffs = {c: int((inc > c).sum()) for c in CUTOFFS}
    return PosteriorSummary(
        inc=inc, g0=g0, n_included=n_inc,
        densities=tuple(densities), cutoffs=cutoffs, n_draws=m,
    )


@dataclass(frozen=True)
class HeatmapMatrix:
    """Inclusion-probability rows (one per model) with cutoff counts."""

    values: np.ndarray
    row_labels: tuple[str, ...]
    cutoff_counts: np.ndarray  # rows x len(CUTOFFS)
    cutoffs: tuple[float, ...] = CUTOFFS


def row_label(key) -> str:
    if isinstance(key, str):
        return key
    if math.isinf(key):
        return "gaussian"
    return f"nu={key:g}"


def heatmap_matrix(summaries: dict) -> HeatmapMatrix:
    """Stack inclusion rows keyed by nu (Gaussian = inf, sorted last) or
    by arbitrary labels (insertion order kept)."""
    if not summaries:
        raise ValueError("no summaries")
    keys = list(summaries)
    if all(isinstance(k, (int, float)) for k in keys):
        keys.sort()
    ks = {s.inc.shape[0] for s in summaries.values()}
    if len(ks) != 1:
        raise ValueError(f"summaries disagree on predictor count: {sorted(ks)}")
    values = np.vstack([summaries[k].inc for k in keys])
    counts = np.array(
        [[summaries[k].cutoffs[c] for c in CUTOFFS] for k in keys], dtype=int
    )
    return HeatmapMatrix(
        values=values,
        row_labels=tuple(row_label(k) for k in keys),
        cutoff_counts=counts,
    )
