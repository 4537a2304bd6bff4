"""Command-line interface: ``simulate``, ``estimate`` and ``ksweep``.

Exit codes: 0 success, 1 estimation/runtime failure, 2 usage or input-schema error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ExtremalQteError, ParameterError, SchemaError
from .extrapolation import ExtrapolationConfig, default_k, extremal_qte, k_sweep
from .propensity import (
    FitOptions,
    Sample,
    SieveBasis,
    default_basis_size,
    default_candidates,
    fit_sieve_logistic,
    stepwise_loocv_select,
)
from .simulation import Method, PRule, SimModel, default_workers, replication_sample, run_study, write_reports

OUTPUT_DIR_ENV = "EXTREMAL_QTE_OUTPUT_DIR"
MISSING = {"", "na", "nan", "null", "none", "."}
SWEEP_FIELDS = ["k", "delta", "ci_lo", "ci_hi", "gamma1", "gamma0", "error"]


class UsageError(Exception):
    pass


@dataclass
class CsvDataset:
    path: str
    outcome: str
    treatment: str
    covariates: list
    sample: Sample
    dropped: int


def read_dataset(path, outcome, treatment, covariates) -> CsvDataset:
    """Parse a header-first UTF-8 CSV; rows with any missing role value are dropped."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [outcome, treatment, *covariates]
        absent = [c for c in needed if c not in header]
        if absent:
            raise SchemaError(f"missing column(s) {absent} in {path}")
        ys, ds, xs = [], [], []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            cells = [(row.get(c) or "").strip() for c in needed]
            if any(v.lower() in MISSING for v in cells):
                dropped += 1
                continue
            try:
                vals = [float(v) for v in cells]
            except ValueError:
                raise SchemaError(f"non-numeric value on line {lineno} of {path}") from None
            if vals[1] not in (0.0, 1.0):
                raise SchemaError(f"treatment must be 0 or 1, got {cells[1]!r} on line {lineno}")
            ys.append(vals[0])
            ds.append(int(vals[1]))
            xs.append(vals[2:])
    if not ys:
        raise SchemaError(f"no complete rows in {path}")
    sample = Sample(np.array(ys), np.array(ds), np.array(xs, dtype=float).reshape(len(ys), len(covariates)))
    return CsvDataset(str(path), outcome, treatment, list(covariates), sample, dropped)


def write_sample_csv(sample: Sample, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "d"] + [f"x{j + 1}" for j in range(sample.r)])
        for i in range(sample.n):
            w.writerow([repr(float(sample.y[i])), int(sample.d[i])] + [repr(float(v)) for v in sample.x[i]])


def _split_list(values):
    out = []
    for v in values:
        out.extend(s for s in v.split(",") if s)
    return out


def _parse_grid(text):
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"--k-grid must look like lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--k-grid needs step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _parse_clip(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
        return FitOptions(clip=(lo, hi))
    except (ValueError, ParameterError):
        raise UsageError(f"--clip must be 'lo,hi' with 0 < lo < hi < 1, got {text!r}") from None


def _out_path(value, default_name):
    if value:
        return Path(value)
    base = os.environ.get(OUTPUT_DIR_ENV)
    return Path(base) / default_name if base else None


def _fit_propensity(args, sample: Sample):
    opts = _parse_clip(args.clip)
    choice = args.basis
    if choice == "loocv":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            basis = stepwise_loocv_select(sample, default_candidates(sample.r), opts, max_n=args.max_loo_n)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    elif choice.startswith("fixed"):
        _, _, h = choice.partition(":")
        try:
            h = int(h) if h else default_basis_size(sample.n, sample.r)
        except ValueError:
            raise UsageError(f"--basis must be 'fixed[:h]' or 'loocv', got {choice!r}") from None
        basis = SieveBasis.first(sample.r, h)
    else:
        raise UsageError(f"--basis must be 'fixed[:h]' or 'loocv', got {choice!r}")
    return fit_sieve_logistic(sample, basis, opts)


def _load_for_estimation(args):
    covs = _split_list(args.covariates)
    if not covs:
        raise UsageError("--covariates needs at least one column")
    ds = read_dataset(args.data, args.outcome, args.treatment, covs)
    sample = ds.sample
    if args.shift:
        sample = Sample(sample.y + args.shift, sample.d, sample.x)
    if ds.dropped:
        print(f"dropped {ds.dropped} row(s) with missing values", file=sys.stderr)
    return ds, sample


def _target_p(args):
    if args.p is not None:
        return args.p
    if not (0.0 < args.quantile < 1.0):
        raise UsageError("--quantile must lie in (0, 1)")
    return 1.0 - args.quantile


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    methods = [Method(m) for m in _split_list(args.methods)]
    out = _out_path(args.out, "simulation") or Path("simulation")
    if args.export_data:
        exp = Path(args.export_data)
        exp.mkdir(parents=True, exist_ok=True)
        for model in args.model:
            for n in args.n:
                for rep in range(args.reps):
                    sample = replication_sample(model, n, args.seed, rep)
                    write_sample_csv(sample, exp / f"{model}_n{n}_rep{rep}.csv")
    reports = run_study(
        args.model,
        args.n,
        args.p_rule,
        methods,
        args.reps,
        args.seed,
        k_exponent=args.k_exponent,
        alpha=args.alpha,
        boot_reps=args.boot_reps,
        workers=args.threads,
    )
    write_reports(reports, out)
    for rep in reports:
        s = rep.summary()
        cov = "-" if s["coverage"] is None else f"{s['coverage']:.3f}"
        print(f"{s['model']} n={s['n']} p={s['p_rule']} {s['method']}: "
              f"mse={s['mse']} coverage={cov} completed={s['completed']}/{s['reps']}")
    return 0


def cmd_estimate(args) -> int:
    ds, sample = _load_for_estimation(args)
    p = _target_p(args)
    k = args.k if args.k is not None else default_k(sample.n)
    cfg = ExtrapolationConfig(n=sample.n, k=k, p=p, alpha=args.alpha)
    model = _fit_propensity(args, sample)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = extremal_qte(sample, model, cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    doc = res.to_dict()
    doc["data"] = {
        "path": ds.path,
        "outcome": ds.outcome,
        "treatment": ds.treatment,
        "covariates": ds.covariates,
        "n": sample.n,
        "n_treated": sample.arm_count(1),
        "dropped_rows": ds.dropped,
        "shift": args.shift,
    }
    doc["propensity"] = model.to_dict()
    _dump_json(doc, _out_path(args.out, "estimate.json"))
    return 0


def cmd_ksweep(args) -> int:
    ds, sample = _load_for_estimation(args)
    p = _target_p(args)
    grid = _parse_grid(args.k_grid)
    model = _fit_propensity(args, sample)
    template = ExtrapolationConfig(n=sample.n, k=max(grid), p=p, alpha=args.alpha)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = k_sweep(sample, model, template, grid)
    path = _out_path(args.out, "ksweep.csv")
    fh = sys.stdout if path is None else open(path, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh)
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            d = asdict(r)
            w.writerow([d[f] for f in SWEEP_FIELDS])
    finally:
        if fh is not sys.stdout:
            fh.close()
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"k={r.k}: {r.error}", file=sys.stderr)
    return 0 if len(failed) < len(rows) else 1


def _add_estimation_flags(sp):
    sp.add_argument("--data", required=True, help="CSV file with a header row")
    sp.add_argument("--outcome", required=True)
    sp.add_argument("--treatment", required=True)
    sp.add_argument("--covariates", required=True, nargs="+", help="column names (space or comma separated)")
    target = sp.add_mutually_exclusive_group(required=True)
    target.add_argument("--p", type=float, help="extreme tail probability")
    target.add_argument("--quantile", type=float, help="target quantile level, p = 1 - quantile")
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--basis", default="fixed", help="'fixed[:h]' (default h = floor(2 n^(1/11))) or 'loocv'")
    sp.add_argument("--clip", default="0.01,0.99", help="propensity clipping bounds 'lo,hi'")
    sp.add_argument("--max-loo-n", type=int, default=2000)
    sp.add_argument("--shift", type=float, default=0.0, help="add a constant to the outcome before estimation")
    sp.add_argument("--seed", type=int, default=None, help="accepted for uniformity; estimation is not randomized")
    sp.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extremal-qte", description="Extremal quantile treatment effects")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo study on models h1-h3")
    sim.add_argument("--model", nargs="+", required=True, choices=[m.value for m in SimModel])
    sim.add_argument("--n", nargs="+", type=int, required=True)
    sim.add_argument("--p-rule", nargs="+", required=True, choices=[r.value for r in PRule])
    sim.add_argument("--methods", nargs="+", default=["hill"],
                     help="any of " + ", ".join(m.value for m in Method))
    sim.add_argument("--reps", type=int, default=300)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--k-exponent", type=float, default=0.65)
    sim.add_argument("--alpha", type=float, default=0.1)
    sim.add_argument("--boot-reps", type=int, default=500)
    sim.add_argument("--threads", type=int, default=default_workers())
    sim.add_argument("--export-data", default=None, help="also write every simulated dataset as CSV here")
    sim.add_argument("--out", default=None, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="extremal QTE from a CSV dataset")
    _add_estimation_flags(est)
    est.add_argument("--k", type=float, default=None, help="intermediate budget (default n^0.65)")
    est.set_defaults(func=cmd_estimate)

    sw = sub.add_parser("ksweep", help="extremal QTE over a grid of k")
    _add_estimation_flags(sw)
    sw.add_argument("--k-grid", required=True, help="lo:hi:step (inclusive)")
    sw.set_defaults(func=cmd_ksweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "methods", None) is not None:
            bad = [m for m in _split_list(args.methods) if m not in {x.value for x in Method}]
            if bad:
                raise UsageError(f"unknown method(s) {bad}")
        return args.func(args)
    except (UsageError, SchemaError) as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except ExtremalQteError as exc:
        print(f"{parser.prog}: estimation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{parser.prog}: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
