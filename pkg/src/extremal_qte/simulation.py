"""Monte Carlo study of extremal QTE estimators on models H1-H3.

Covariate ``X`` and ``U`` are uniform on [0, 1] and treatment is assigned by
``D = 1{U <= 0.5 X**2 + 0.25}``. In H2 and H3 the two potential outcomes of a
unit are drawn independently given ``X``; H1 shares the Student-t factor.
All methods in a cell are evaluated on the same datasets.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_ci
from .distributions import SimModel, make_rng, true_model_tail_quantile
from .errors import ExtremalQteError, ParameterError
from .extrapolation import ExtrapolationConfig, default_k, extremal_qte, firpo_zhang_qte, pickands_qte
from .propensity import Sample, fit_polynomial_propensity

__all__ = [
    "SimModel",
    "PRule",
    "Method",
    "McRow",
    "McReport",
    "true_propensity",
    "generate_potential_outcomes",
    "generate",
    "replication_sample",
    "true_delta",
    "run_cell",
    "run_study",
    "write_reports",
]

_MODEL_CODE = {SimModel.H1: 1, SimModel.H2: 2, SimModel.H3: 3}


class PRule(str, enum.Enum):
    FIVE_OVER_N = "5_over_n"
    ONE_OVER_N = "1_over_n"
    FIVE_OVER_NLOGN = "5_over_nlogn"

    def p(self, n: int) -> float:
        if self is PRule.FIVE_OVER_N:
            return 5.0 / n
        if self is PRule.ONE_OVER_N:
            return 1.0 / n
        return 5.0 / (n * math.log(n))


class Method(str, enum.Enum):
    HILL = "hill"
    PICKANDS = "pickands"
    FIRPO_ZHANG = "firpo_zhang"
    BS_HILL = "bs_hill"
    BS_PICKANDS = "bs_pickands"


def true_propensity(x):
    return 0.5 * np.asarray(x, dtype=float) ** 2 + 0.25


def generate_potential_outcomes(model, n: int, rng) -> dict:
    """Covariates, treatment and both potential outcomes for ``n`` units."""
    model = SimModel.parse(model)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = make_rng(rng)
    x = rng.random(n)
    u = rng.random(n)
    d = (u <= true_propensity(x)).astype(np.int8)
    if model is SimModel.H1:
        s = rng.standard_t(3, size=n)
        y0 = s * (1.0 + x)
        y1 = 5.0 * y0
    elif model is SimModel.H2:
        ex = np.exp(x)
        y1 = rng.standard_exponential(n) ** (-1.0 / 2.0) * ex
        y0 = rng.standard_exponential(n) ** (-1.0 / 3.0) * ex
    else:
        y1 = 2.0 * np.exp(rng.standard_exponential(n) / (1.75 + x))
        y0 = 1.0 * np.exp(rng.standard_exponential(n) / (1.75 + 5.0 * x))
    return {"x": x, "d": d, "y1": y1, "y0": y0}


def generate(model, n: int, rng) -> Sample:
    po = generate_potential_outcomes(model, n, rng)
    y = np.where(po["d"] == 1, po["y1"], po["y0"])
    return Sample(y, po["d"], po["x"].reshape(-1, 1))


def replication_sample(model, n: int, master_seed: int, rep: int) -> Sample:
    """Dataset of replication ``rep``; shared by every method and p-rule of a cell."""
    model = SimModel.parse(model)
    return generate(model, n, make_rng(master_seed, _MODEL_CODE[model], n, rep))


def true_delta(model, p: float) -> float:
    return true_model_tail_quantile(model, 1, p) - true_model_tail_quantile(model, 0, p)


@dataclass
class McRow:
    rep: int
    delta_hat: float = float("nan")
    delta_true: float = float("nan")
    squared_error: float = float("nan")
    covered: bool | None = None
    ci_lo: float = float("nan")
    ci_hi: float = float("nan")
    standardized: float = float("nan")
    scaled_error: float = float("nan")
    sigma_hat: float = float("nan")
    saturated: bool = False
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class McReport:
    model: SimModel
    n: int
    p_rule: PRule
    p: float
    k: float
    method: Method
    delta_true: float
    rows: list = field(default_factory=list)

    @property
    def completed(self) -> list:
        return [r for r in self.rows if r.ok]

    @property
    def mse(self) -> float:
        errs = [r.squared_error for r in self.completed]
        return float(np.mean(errs)) if errs else float("nan")

    @property
    def coverage(self) -> float:
        cov = [r.covered for r in self.completed if r.covered is not None]
        return float(np.mean(cov)) if cov else float("nan")

    @property
    def coverage_se(self) -> float:
        cov = [r.covered for r in self.completed if r.covered is not None]
        if not cov:
            return float("nan")
        c = float(np.mean(cov))
        return math.sqrt(c * (1.0 - c) / len(cov))

    @property
    def beyond_sample(self) -> bool:
        """Target level lies beyond the data (``n p < 1``)."""
        return self.n * self.p < 1.0

    def failures(self) -> dict:
        out = {}
        for r in self.rows:
            if r.error:
                kind = r.error.split(":", 1)[0]
                out[kind] = out.get(kind, 0) + 1
        return dict(sorted(out.items()))

    def summary(self) -> dict:
        done = self.completed
        return {
            "schema_version": 1,
            "model": self.model.value,
            "n": self.n,
            "p_rule": self.p_rule.value,
            "p": self.p,
            "k": self.k,
            "method": self.method.value,
            "delta_true": self.delta_true,
            "reps": len(self.rows),
            "completed": len(done),
            "failures": self.failures(),
            "mse": _json_float(self.mse),
            "median_squared_error": _json_float(float(np.median([r.squared_error for r in done])) if done else float("nan")),
            "coverage": _json_float(self.coverage),
            "coverage_se": _json_float(self.coverage_se),
            "beyond_sample": self.beyond_sample,
            "saturated": sum(r.saturated for r in done),
        }


def _json_float(x):
    return None if x is None or not math.isfinite(x) else x


def _replication(model, n, p, k, alpha, methods, master_seed, rep, boot_reps):
    stream = (_MODEL_CODE[model], n, rep)
    sample = replication_sample(model, n, master_seed, rep)
    dtrue = true_delta(model, p)
    cfg = ExtrapolationConfig(n=n, k=k, p=p, alpha=alpha)
    out = {}
    try:
        propensity = fit_polynomial_propensity(sample)
    except ExtremalQteError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return {m: McRow(rep, delta_true=dtrue, error=msg) for m in methods}
    boot_seed = int(np.random.SeedSequence([int(master_seed), *stream, 99]).generate_state(1)[0])
    for m in methods:
        row = McRow(rep, delta_true=dtrue)
        try:
            if m is Method.HILL:
                res = extremal_qte(sample, propensity, cfg)
                row.delta_hat = res.delta
                row.ci_lo, row.ci_hi = res.ci
                row.sigma_hat = res.sigma_hat
                row.scaled_error = res.beta_n * (res.delta - dtrue)
                row.standardized = row.scaled_error / row.sigma_hat if row.sigma_hat > 0 else float("nan")
            elif m is Method.PICKANDS:
                row.delta_hat = pickands_qte(sample, propensity, cfg).delta
            elif m is Method.FIRPO_ZHANG:
                est = firpo_zhang_qte(sample, propensity, p)
                row.delta_hat, row.saturated = est.delta, est.saturated
            else:
                bmethod = "hill" if m is Method.BS_HILL else "pickands"
                bs = bootstrap_ci(sample, BootstrapConfig(boot_reps, bmethod, cfg, boot_seed), propensity=propensity)
                row.delta_hat, row.ci_lo, row.ci_hi = bs.delta, bs.lo, bs.hi
                row.sigma_hat = bs.sigma_star
                row.standardized = (bs.delta - dtrue) / bs.sigma_star if bs.sigma_star > 0 else float("nan")
        except ExtremalQteError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        else:
            row.squared_error = (row.delta_hat - dtrue) ** 2
            if m not in (Method.PICKANDS, Method.FIRPO_ZHANG):
                row.covered = bool(row.ci_lo <= dtrue <= row.ci_hi)
        out[m] = row
    return out


def _replication_star(args):
    return _replication(*args)


def run_cell(
    model,
    n: int,
    p_rule,
    methods,
    reps: int,
    master_seed: int,
    k_exponent: float = 0.65,
    alpha: float = 0.1,
    boot_reps: int = 500,
    workers: int = 1,
) -> list:
    """Run one (model, n, p) cell; returns one :class:`McReport` per method."""
    model = SimModel.parse(model)
    p_rule = PRule(p_rule)
    methods = [Method(m) for m in methods]
    if reps < 1:
        raise ParameterError(f"reps must be >= 1, got {reps}")
    if not methods:
        raise ParameterError("at least one method is required")
    p = p_rule.p(n)
    k = default_k(n, k_exponent)
    dtrue = true_delta(model, p)
    jobs = [(model, n, p, k, alpha, methods, master_seed, rep, boot_reps) for rep in range(reps)]
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication_star, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_replication_star(j) for j in jobs]
    reports = []
    for m in methods:
        rows = sorted((res[m] for res in results), key=lambda r: r.rep)
        reports.append(McReport(model, n, p_rule, p, k, m, dtrue, rows))
    return reports


def run_study(models, n_list, p_rules, methods, reps: int, master_seed: int, **kwargs) -> list:
    """Every (model, n, p) combination; reports in grid order."""
    if isinstance(models, (str, SimModel)):
        models = [models]
    reports = []
    for model in models:
        for n in n_list:
            for rule in p_rules:
                reports.extend(run_cell(model, n, rule, methods, reps, master_seed, **kwargs))
    return reports


ROW_FIELDS = [
    "model", "n", "p_rule", "p", "k", "method", "rep", "delta_hat", "delta_true",
    "squared_error", "covered", "ci_lo", "ci_hi", "standardized", "scaled_error",
    "sigma_hat", "saturated", "error",
]
PLOT_FIELDS = ["model", "n", "p_rule", "method", "kind", "x", "y", "y_lo", "y_hi"]


def _cell_key(rep: McReport):
    return [rep.model.value, rep.n, rep.p_rule.value]


def _plot_rows(rep: McReport):
    done = rep.completed
    key = _cell_key(rep) + [rep.method.value]
    rows = []
    if done:
        se = np.array([r.squared_error for r in done])
        with np.errstate(divide="ignore"):
            logse = np.log10(se)
        for q in (0.1, 0.25, 0.5, 0.75, 0.9):
            rows.append(key + ["log10_squared_error_quantile", q, float(np.quantile(logse, q)), "", ""])
        rows.append(key + ["log10_mse", "", float(np.log10(rep.mse)) if rep.mse > 0 else "", "", ""])
    if math.isfinite(rep.coverage):
        h = 1.959963984540054 * rep.coverage_se
        rows.append(key + ["coverage", "", rep.coverage, rep.coverage - h, rep.coverage + h])
    z = np.array([r.standardized for r in done])
    z = np.sort(z[np.isfinite(z)])
    if z.size == 0 and done:
        # no pivot available: QQ data of the centred and scaled estimates
        est = np.array([r.delta_hat for r in done])
        sd = est.std(ddof=1) if est.size > 1 else 0.0
        z = np.sort((est - est.mean()) / sd) if sd > 0 else np.array([])
    m = z.size
    nd = NormalDist()
    for i, v in enumerate(z):
        rows.append(key + ["qq", nd.inv_cdf((i + 0.5) / m), float(v), "", ""])
    return rows


def write_reports(reports, out_dir) -> dict:
    """Write ``replications.csv``, ``summary.json`` and ``plot_data.csv`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "replications": out / "replications.csv",
        "summary": out / "summary.json",
        "plot_data": out / "plot_data.csv",
    }
    with open(paths["replications"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for rep in reports:
            for r in rep.rows:
                covered = "" if r.covered is None else int(r.covered)
                w.writerow(_cell_key(rep) + [rep.p, rep.k, rep.method.value, r.rep, r.delta_hat, r.delta_true,
                                             r.squared_error, covered, r.ci_lo, r.ci_hi, r.standardized,
                                             r.scaled_error, r.sigma_hat, int(r.saturated), r.error])
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump({"schema_version": 1, "cells": [rep.summary() for rep in reports]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["plot_data"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_FIELDS)
        for rep in reports:
            w.writerows(_plot_rows(rep))
    return paths


def default_workers() -> int:
    return os.cpu_count() or 1
