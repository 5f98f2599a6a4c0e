"""CSV ingestion and artifact serialization.

Numeric output is formatted with 17 significant digits throughout, which
round-trips IEEE doubles exactly, so identical runs produce byte-identical
files.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .gibbs import TraceStore
from .model_core import ConstantColumnError, Dataset, standardize
from .reporting import HeatmapMatrix, PosteriorSummary


class IngestError(ValueError):
    """Malformed input: missing values, absent columns, parse failures."""


def fmt(x) -> str:
    return f"{float(x):.17g}"


def ingest_csv(path, response: str, always_include=()) -> Dataset:
    """Load a headered CSV and build a standardized Dataset.

    One column is the response; `always_include` columns form the
    always-included block; every remaining column becomes a candidate
    predictor. Missing values are rejected outright.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except Exception as e:
        raise IngestError(f"{path}: cannot parse CSV ({e})") from e
    if response not in frame.columns:
        raise IngestError(f"{path}: response column {response!r} not found")
    always_include = list(always_include)
    for col in always_include:
        if col not in frame.columns:
            raise IngestError(f"{path}: always-included column {col!r} not found")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    na_mask = numeric.isna()
    if na_mask.any().any():
        rows = np.flatnonzero(na_mask.any(axis=1))
        col = na_mask.columns[na_mask.iloc[rows[0]].to_numpy()][0]
        # +2: header line plus 1-based numbering
        raise IngestError(
            f"{path}: missing or non-numeric value at line {rows[0] + 2}, "
            f"column {col!r} ({len(rows)} bad row(s) total); no imputation"
        )
    predictors = [c for c in frame.columns if c != response and c not in always_include]
    if not predictors:
        raise IngestError(f"{path}: no candidate predictor columns left")
    y = numeric[response].to_numpy(dtype=float)
    X = numeric[predictors].to_numpy(dtype=float)
    U = (
        numeric[always_include].to_numpy(dtype=float)
        if always_include
        else np.zeros((len(y), 0))
    )
    raw = Dataset(y, X, U, tuple(predictors), u_names=tuple(always_include))
    try:
        return standardize(raw)
    except (ConstantColumnError, ValueError) as e:
        raise IngestError(f"{path}: {e}") from e


def dataset_to_csv(path, data: Dataset, response_name: str = "y") -> None:
    """Write (standardized) response, always-included, and predictors."""
    path = Path(path)
    u_names = list(data.u_names) or [f"u{j + 1}" for j in range(data.l)]
    header = [response_name, *u_names, *data.names]
    cols = [data.y]
    cols.extend(data.U[:, j] for j in range(data.l))
    cols.extend(data.X[:, j] for j in range(data.k))
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Trace round-trip

def write_trace_csv(path, trace: TraceStore) -> None:
    """Columns: iter, sigma2, q, r2, gamma2, z_1..z_k, beta_1..beta_k."""
    k = trace.k
    m = trace.n_draws
    header = (
        ["iter", "sigma2", "q", "r2", "gamma2"]
        + [f"z_{i + 1}" for i in range(k)]
        + [f"beta_{i + 1}" for i in range(k)]
    )
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for j in range(m):
            parts = [
                str(int(trace.iters[j])),
                fmt(trace.sigma2[j]),
                fmt(trace.q[j]),
                fmt(trace.r2[j]),
                fmt(trace.gamma2[j]),
            ]
            parts.extend(str(int(v)) for v in trace.z[j])
            parts.extend(fmt(v) for v in trace.beta[j])
            fh.write(",".join(parts) + "\n")


def read_trace_csv(path) -> TraceStore:
    path = Path(path)
    try:
        # round_trip parsing: stored 17-digit decimals must reproduce the
        # exact doubles, or report-after-fit breaks byte identity
        frame = pd.read_csv(path, float_precision="round_trip")
    except Exception as e:
        raise IngestError(f"{path}: cannot parse trace ({e})") from e
    zcols = [c for c in frame.columns if c.startswith("z_")]
    bcols = [c for c in frame.columns if c.startswith("beta_")]
    needed = {"iter", "sigma2", "q", "r2", "gamma2"}
    if not needed.issubset(frame.columns) or not zcols or len(zcols) != len(bcols):
        raise IngestError(f"{path}: not a trace file")
    k = len(zcols)
    trace = TraceStore(len(frame), k)
    zs = frame[zcols].to_numpy()
    bs = frame[bcols].to_numpy(dtype=float)
    if not np.isin(zs, (0, 1)).all():
        raise IngestError(f"{path}: corrupt inclusion indicators")
    for j in range(len(frame)):
        trace.append(
            int(frame["iter"].iloc[j]), zs[j], bs[j],
            float(frame["sigma2"].iloc[j]), float(frame["q"].iloc[j]),
            float(frame["r2"].iloc[j]), float(frame["gamma2"].iloc[j]),
        )
    return trace


# ---------------------------------------------------------------------------
# Summary artifacts

def _json_value(obj):
    if isinstance(obj, dict):
        return {str(k): _json_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_value(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if np.isnan(x) else _Raw(fmt(x))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


class _Raw(str):
    """Pre-formatted JSON number."""


def _dump_json(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(k)}: {_dump_json(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}  {_dump_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, _Raw):
        return str(obj)
    return json.dumps(obj)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(_dump_json(_json_value(payload)) + "\n")


def summary_payload(summary: PosteriorSummary, names) -> dict:
    preds = []
    for i, name in enumerate(names):
        preds.append({
            "name": name,
            "inc": float(summary.inc[i]),
            "g0": None if np.isnan(summary.g0[i]) else float(summary.g0[i]),
            "n_included": int(summary.n_included[i]),
        })
    return {
        "n_draws": summary.n_draws,
        "predictors": preds,
        "cutoffs": {fmt_cutoff(c): int(v) for c, v in summary.cutoffs.items()},
    }


def fmt_cutoff(c: float) -> str:
    return f"{c:g}"


def write_summary_json(path, summary: PosteriorSummary, names) -> None:
    write_json(path, summary_payload(summary, names))


def write_inclusion_csv(path, heatmap: HeatmapMatrix, names) -> None:
    cut_cols = [f"n_above_{fmt_cutoff(c)}" for c in heatmap.cutoffs]
    with Path(path).open("w") as fh:
        fh.write(",".join(["model", *names, *cut_cols]) + "\n")
        for r, label in enumerate(heatmap.row_labels):
            parts = [label]
            parts.extend(fmt(v) for v in heatmap.values[r])
            parts.extend(str(int(v)) for v in heatmap.cutoff_counts[r])
            fh.write(",".join(parts) + "\n")


def safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def write_density_csvs(out_dir, summary: PosteriorSummary, names) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, name in enumerate(names):
        grid = summary.densities[i]
        if grid is None:
            continue
        p = out_dir / f"density_{i + 1:02d}_{safe_name(name)}.csv"
        with p.open("w") as fh:
            fh.write("beta,density\n")
            for xv, yv in zip(grid.x, grid.y):
                fh.write(f"{fmt(xv)},{fmt(yv)}\n")
        written.append(p)
    return written


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()
