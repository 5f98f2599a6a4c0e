"""Command-line surface: fit, report, simulate, inject, sweep, baseline, geweke.

Exit codes: 0 success, 2 malformed input or invalid flags, 3 numerical
degeneracy inside a chain. Seeds default to 0 (or the SLABSPIKE_SEED
environment variable); an explicit --seed always wins.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import SingularSystemError, lasso_fit, ridge_fit
from .experiments import (
    DEFAULT_NUS,
    GAUSSIAN_KEY,
    SimScenario,
    inject_random,
    nu_sweep,
    simulate_dataset,
)
from .geweke import geweke_joint_test
from .gibbs import TraceStore, run_chains
from .io import (
    IngestError,
    dataset_to_csv,
    fmt,
    ingest_csv,
    read_trace_csv,
    sha256_file,
    write_density_csvs,
    write_inclusion_csv,
    write_json,
    write_summary_json,
    write_trace_csv,
    summary_payload,
)
from .marginal import NumericalDegeneracyError
from .model_core import GAUSSIAN, STUDENT_T, SlabSpec
from .reporting import heatmap_matrix, row_label, summarize

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _default_seed() -> int:
    return int(os.environ.get("SLABSPIKE_SEED", "0"))


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=["gaussian", "t"], default="gaussian")
    p.add_argument("--nu", type=float, default=None,
                   help="degrees of freedom for the t slab (> 2)")
    p.add_argument("--iters", type=int, default=22_000)
    p.add_argument("--burn", type=int, default=2_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--grid-q", type=int, default=100)
    p.add_argument("--grid-r2", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="input CSV with a header row")
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument("--always-include", nargs="*", default=[],
                   help="column names always kept in the regression")


def _spec_from_args(args) -> SlabSpec:
    family = STUDENT_T if args.family == "t" else GAUSSIAN
    nu = args.nu
    if family == STUDENT_T and nu is None:
        raise IngestError("--family t requires --nu")
    if family == GAUSSIAN:
        nu = None
    seed = args.seed if args.seed is not None else _default_seed()
    return SlabSpec(
        family=family, nu=nu, grid_q=args.grid_q, grid_r2=args.grid_r2,
        n_iter=args.iters, n_burn=args.burn, thin=args.thin, seed=seed,
    )


def _spec_manifest(spec: SlabSpec) -> dict:
    return {
        "family": spec.family,
        "nu": spec.nu,
        "grid_q": spec.grid_q,
        "grid_r2": spec.grid_r2,
        "n_iter": spec.n_iter,
        "n_burn": spec.n_burn,
        "thin": spec.thin,
        "seed": spec.seed,
    }


def _write_manifest(out: Path, command: str, spec, args, names, extra=None) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "spec": _spec_manifest(spec) if spec else None,
        "input": getattr(args, "input", None),
        "input_sha256": sha256_file(args.input) if getattr(args, "input", None) else None,
        "response": getattr(args, "response", None),
        "always_include": list(getattr(args, "always_include", []) or []),
        "chains": getattr(args, "chains", None),
        "names": list(names),
    }
    if extra:
        payload.update(extra)
    write_json(out / "manifest.json", payload)


def _emit_single_run(out: Path, traces, names) -> None:
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    for c, trace in enumerate(traces):
        write_trace_csv(tdir / f"chain_{c:02d}.csv", trace)
    merged = TraceStore.concat(traces)
    summary = summarize(merged)
    write_summary_json(out / "summary.json", summary, names)
    write_inclusion_csv(out / "inclusion.csv", heatmap_matrix({"fit": summary}), names)
    write_density_csvs(out / "densities", summary, names)


def cmd_fit(args) -> int:
    data = ingest_csv(args.input, args.response, args.always_include)
    spec = _spec_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_jobs = min(args.chains, os.cpu_count() or 1, 4)
    traces = run_chains(data, spec, n_chains=args.chains, n_jobs=n_jobs)
    _emit_single_run(out, traces, data.names)
    _write_manifest(out, "fit", spec, args, data.names)
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    tdir = out / "traces"
    if not tdir.is_dir():
        raise IngestError(f"{out}: no traces/ directory to report on")
    names = None
    manifest = out / "manifest.json"
    if manifest.is_file():
        import json
        names = json.loads(manifest.read_text()).get("names")
    subdirs = sorted(d for d in tdir.iterdir() if d.is_dir())
    if subdirs:
        summaries = {}
        for d in subdirs:
            traces = [read_trace_csv(p) for p in sorted(d.glob("chain_*.csv"))]
            if not traces:
                raise IngestError(f"{d}: no trace files")
            key = GAUSSIAN_KEY if d.name == "gaussian" else float(d.name.removeprefix("nu_"))
            summaries[key] = summarize(TraceStore.concat(traces))
        k = next(iter(summaries.values())).inc.shape[0]
        names = names or [f"x{i + 1}" for i in range(k)]
        hm = heatmap_matrix(summaries)
        write_inclusion_csv(out / "inclusion.csv", hm, names)
        for key, summary in summaries.items():
            write_summary_json(out / f"summary_{row_label(key)}.json", summary, names)
        return EXIT_OK
    traces = [read_trace_csv(p) for p in sorted(tdir.glob("chain_*.csv"))]
    if not traces:
        raise IngestError(f"{tdir}: no trace files")
    merged = TraceStore.concat(traces)
    names = names or [f"x{i + 1}" for i in range(merged.k)]
    summary = summarize(merged)
    write_summary_json(out / "summary.json", summary, names)
    write_inclusion_csv(out / "inclusion.csv", heatmap_matrix({"fit": summary}), names)
    write_density_csvs(out / "densities", summary, names)
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    scenario = SimScenario(s=args.scenario, seed=seed)
    data = simulate_dataset(scenario)
    dataset_to_csv(args.out, data)
    print(f"wrote {args.out}: n={data.n} k={data.k} sigma_eps={scenario.sigma_eps}")
    return EXIT_OK


def cmd_inject(args) -> int:
    data = ingest_csv(args.input, args.response, args.always_include)
    seed = args.seed if args.seed is not None else _default_seed()
    augmented = inject_random(data, args.count, seed)
    dataset_to_csv(args.out, augmented, response_name=args.response)
    print(f"wrote {args.out}: k={augmented.k} ({args.count} injected)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = ingest_csv(args.input, args.response, args.always_include)
    spec = _spec_from_args(args)
    nus = tuple(float(v) for v in args.nus.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces, errors = nu_sweep(data, spec, nus, include_gaussian=not args.no_gaussian)
    summaries = {}
    for key, trace in traces.items():
        label = row_label(key)
        d = out / "traces" / (label.replace("nu=", "nu_") if label != "gaussian" else "gaussian")
        d.mkdir(parents=True, exist_ok=True)
        write_trace_csv(d / "chain_00.csv", trace)
        summaries[key] = summarize(trace)
        write_summary_json(out / f"summary_{row_label(key)}.json", summaries[key], data.names)
    if summaries:
        write_inclusion_csv(out / "inclusion.csv", heatmap_matrix(summaries), data.names)
    _write_manifest(out, "sweep", spec, args, data.names,
                    extra={"nus": list(nus), "gaussian": not args.no_gaussian})
    for key, err in errors.items():
        print(f"warning: {row_label(key)} failed: {err}", file=sys.stderr)
    if errors and not traces:
        raise NumericalDegeneracyError("every sweep row failed")
    return EXIT_OK


def cmd_baseline(args) -> int:
    data = ingest_csv(args.input, args.response, args.always_include)
    if args.method == "ridge":
        coef = ridge_fit(data, args.penalty)
    else:
        coef = lasso_fit(data, args.penalty)
    with Path(args.out).open("w") as fh:
        fh.write("name,estimate\n")
        for name, b in zip(data.names, coef):
            fh.write(f"{name},{fmt(b)}\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_geweke(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    family = STUDENT_T if args.family == "t" else GAUSSIAN
    spec = SlabSpec(
        family=family, nu=args.nu if family == STUDENT_T else None,
        grid_q=args.grid_q, grid_r2=args.grid_r2,
        n_iter=2, n_burn=0, thin=1, seed=seed,
    )
    report = geweke_joint_test((args.n, args.k, 0), spec, n_draws=args.draws)
    print(report)
    if args.out:
        write_json(Path(args.out), {
            "passed": report.passed,
            "threshold": report.threshold,
            "n_draws": report.n_draws,
            "rows": [
                {"stat": r.stat, "mc_mean": r.mc_mean, "sc_mean": r.sc_mean,
                 "se": r.se, "g": r.g}
                for r in report.rows
            ],
        })
    return EXIT_OK if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slabspike",
        description="Spike-and-slab Bayesian regression with Gaussian and "
                    "Student-t slabs and an R2-induced hyperprior",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run chains on a CSV and write artifacts")
    _add_input_flags(p)
    _add_spec_flags(p)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="regenerate summaries from stored traces")
    p.add_argument("--out", required=True, help="directory holding traces/")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="write a simulated dataset CSV")
    p.add_argument("--scenario", type=int, default=1, choices=range(1, 7))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inject", help="append standardized random predictors")
    _add_input_flags(p)
    p.add_argument("--count", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("sweep", help="run one chain per degrees-of-freedom value")
    _add_input_flags(p)
    _add_spec_flags(p)
    p.add_argument("--nus", default=",".join(str(v) for v in DEFAULT_NUS))
    p.add_argument("--no-gaussian", action="store_true",
                   help="skip the Gaussian-slab row")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="ridge or lasso reference fit")
    _add_input_flags(p)
    p.add_argument("--method", choices=["ridge", "lasso"], required=True)
    p.add_argument("--penalty", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("geweke", help="sampler joint-distribution self-test")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--draws", type=int, default=20_000)
    p.add_argument("--family", choices=["gaussian", "t"], default="gaussian")
    p.add_argument("--nu", type=float, default=6.0)
    p.add_argument("--grid-q", type=int, default=24)
    p.add_argument("--grid-r2", type=int, default=24)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_geweke)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SingularSystemError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalDegeneracyError as e:
        where = f" (sweep {e.sweep})" if getattr(e, "sweep", None) else ""
        print(f"numerical degeneracy{where}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
