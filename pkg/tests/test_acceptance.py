"""Acceptance gate: one test per criterion, each reporting a pass/fail line."""
import json
import time

import numpy as np
import pytest
from scipy import stats

from conftest import record_criterion
from extremal_qte.cli import main, write_sample_csv
from extremal_qte.distributions import Pareto, make_rng, sample, true_tail_quantile
from extremal_qte.extrapolation import default_k, extrapolate_quantile
from extremal_qte.inference import VarianceComponents, sigma2_hat
from extremal_qte.ipw_quantile import QuantileEstimate, ipw_arm_quantile, weighted_quantile
from extremal_qte.propensity import Sample, SieveBasis, fit_sieve_logistic
from extremal_qte.simulation import generate, run_cell, true_propensity
from extremal_qte.tail_index import causal_hill

SEED = 20240501


def brute_force_minimizer(values, weights, tau):
    cands = np.unique(values)
    resid = values[None, :] - cands[:, None]
    loss = (weights[None, :] * resid * (tau - (resid < 0))).sum(axis=1)
    return cands[int(np.argmin(loss))]


def test_criterion_01_weighted_quantile_oracle():
    rng = make_rng(SEED, 1)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(1, 101))
        values = rng.normal(size=n)
        if i % 2:
            values = np.round(values, 1)  # force ties
        weights = rng.exponential(size=n)
        tau = float(rng.uniform(0.01, 0.99))
        mismatches += weighted_quantile(values, weights, tau) != brute_force_minimizer(values, weights, tau)
    record_criterion(1, mismatches == 0, f"weighted quantile vs pinball minimizer: {mismatches}/1000 mismatches")


def test_criterion_02_classical_hill_reduction():
    rng = make_rng(SEED, 2)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(50, 2000))
        y = sample(Pareto(float(rng.uniform(0.5, 4))), n, rng)
        k = int(rng.integers(5, n // 2))
        order = np.sort(y)
        threshold = order[n - k - 1]
        classical = np.mean(np.log(order[n - k:]) - np.log(threshold))
        s = Sample(y, np.ones(n, dtype=int), np.zeros(n))
        got = causal_hill(s, np.ones(n), 1, QuantileEstimate(1, 1 - k / n, threshold, n), k).gamma
        worst = max(worst, abs(got / classical - 1))
    record_criterion(2, worst <= 1e-12, f"causal vs classical Hill: max rel diff {worst:.2e}")


def test_criterion_03_pareto_extrapolation():
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 3.0, 5.0):
        for b in (0.1, 1.0, 7.0):
            law = Pareto(alpha, b)
            for tau in (0.2, 0.05, 0.01):
                for p in (tau / 2, 1e-4, 1e-8):
                    q = QuantileEstimate(1, 1 - tau, true_tail_quantile(law, tau), 1.0)
                    got = extrapolate_quantile(q, 1 / alpha, p, tail=tau)
                    worst = max(worst, abs(got / true_tail_quantile(law, p) - 1))
    record_criterion(3, worst <= 1e-12, f"Pareto extrapolation: max rel error {worst:.2e}")


def test_criterion_04_hill_consistency():
    errors = []
    for n in (500, 2000, 8000):
        k = default_k(n)
        errs = []
        for seed in range(200):
            rng = make_rng(SEED, 4, n, seed)
            y = sample(Pareto(3.0), n, rng)
            d = (rng.random(n) < 0.5).astype(int)
            s = Sample(y, d, np.zeros(n))
            q = ipw_arm_quantile(s, 0.5, 1, 1 - k / n)
            errs.append(abs(causal_hill(s, 0.5, 1, q, k).gamma - 1 / 3))
        errors.append(float(np.mean(errs)))
    ok = errors[0] > errors[1] > errors[2] and errors[2] <= 0.05
    record_criterion(4, ok, "mean |gamma - 1/3| at n=500/2000/8000: " + ", ".join(f"{e:.4f}" for e in errors))


def test_criterion_05_coverage_h1():
    t0 = time.perf_counter()
    (rep,) = run_cell("h1", 2000, "5_over_n", ["hill"], reps=500, master_seed=SEED)
    cov = rep.coverage
    ok = 0.85 <= cov <= 0.95 and len(rep.completed) == 500
    record_criterion(5, ok, f"H1 n=2000 p=5/n coverage {cov:.3f} over {len(rep.completed)} reps "
                            f"({time.perf_counter() - t0:.0f}s)")


def test_criterion_06_mse_ordering_h2():
    hill, pick, fz = run_cell("h2", 2000, "5_over_nlogn", ["hill", "pickands", "firpo_zhang"], reps=300,
                              master_seed=SEED)
    done = {r.rep for r in hill.completed} & {r.rep for r in pick.completed} & {r.rep for r in fz.completed}

    def mse(rep):
        return float(np.mean([r.squared_error for r in rep.rows if r.rep in done]))

    m = mse(hill), mse(pick), mse(fz)
    ok = m[0] < m[1] and m[0] < m[2] and len(done) >= 290
    record_criterion(6, ok, f"H2 MSE hill={m[0]:.1f} pickands={m[1]:.1f} firpo_zhang={m[2]:.1f} "
                            f"on {len(done)} paired reps")


def test_criterion_07_normality_h2():
    (rep,) = run_cell("h2", 5000, "5_over_n", ["hill"], reps=300, master_seed=SEED)
    z = np.array([r.standardized for r in rep.completed])
    pval = stats.kstest(z, "norm").pvalue
    ok = pval > 0.01 and z.size == 300
    record_criterion(7, ok, f"H2 n=5000 KS p-value {pval:.3f} (mean {z.mean():+.3f}, sd {z.std(ddof=1):.3f})")


def test_criterion_08_variance_consistency_h1():
    (rep,) = run_cell("h1", 5000, "5_over_n", ["hill"], reps=300, master_seed=SEED)
    scaled = np.array([r.scaled_error for r in rep.completed])
    sigma = np.array([r.sigma_hat for r in rep.completed])
    ratio = scaled.std(ddof=1) / sigma.mean()
    record_criterion(8, abs(ratio - 1) <= 0.25,
                     f"H1 n=5000 sd(beta*(delta_hat-delta)) / mean(sigma_hat) = {ratio:.3f}")


def dense_sigma2(c):
    sigma = np.diag([c.G1, c.G0, c.H1, c.H0])
    sigma[0, 2] = sigma[2, 0] = c.J1
    sigma[1, 3] = sigma[3, 1] = c.J0
    b = np.array([[1.0, 0.0, -c.gamma1, 0.0], [0.0, 1.0, 0.0, -c.gamma0]])
    v = np.array([min(1.0, c.kappa), -min(1.0, 1.0 / c.kappa)])
    return float(v @ (b @ sigma @ b.T) @ v)


def test_criterion_09_sigma2_assembly():
    rng = make_rng(SEED, 9)
    worst = 0.0
    for _ in range(1000):
        arms = []
        for _ in range(2):
            a = rng.normal(size=(2, 2))
            m = a @ a.T  # PSD block (G, J; J, H)
            arms.append((m[0, 0], m[1, 1], m[0, 1]))
        (g1, h1, j1), (g0, h0, j0) = arms
        gam1, gam0 = rng.uniform(0, 2, 2)
        kappa = float(np.exp(rng.uniform(-4, 4)))
        c = VarianceComponents(h1, h0, g1, g0, j1, j0, gam1, gam0, kappa)
        dense = dense_sigma2(c)
        worst = max(worst, abs(sigma2_hat(c) - dense) / abs(dense))
    record_criterion(9, worst <= 1e-10, f"fast vs dense sigma2: max rel diff {worst:.2e}")


def test_criterion_10_propensity_sup_error():
    grid = np.linspace(0, 1, 101)
    good = 0
    errs = []
    for seed in range(100):
        s = generate("h1", 5000, make_rng(SEED, 10, seed))
        model = fit_sieve_logistic(s, SieveBasis.full(1, 2))
        err = float(np.max(np.abs(model.predict(grid) - true_propensity(grid))))
        errs.append(err)
        good += err <= 0.05
    record_criterion(10, good >= 95, f"{good}/100 fits with sup error <= 0.05 (worst {max(errs):.4f})")


def _cli_outputs(tmp, tag):
    data = tmp / "data.csv"
    if not data.exists():
        write_sample_csv(generate("h2", 1500, 11), data)
    out = tmp / tag
    codes = [
        main(["simulate", "--model", "h1", "h2", "--n", "800", "--p-rule", "5_over_n", "1_over_n",
              "--methods", "hill", "pickands", "firpo_zhang", "bs_hill", "--boot-reps", "20", "--reps", "4",
              "--seed", "7", "--threads", "1", "--out", str(out / "sim")]),
        main(["estimate", "--data", str(data), "--outcome", "y", "--treatment", "d", "--covariates", "x1",
              "--quantile", "0.999", "--seed", "7", "--out", str(out / "est.json")]),
        main(["estimate", "--data", str(data), "--outcome", "y", "--treatment", "d", "--covariates", "x1",
              "--p", "0.002", "--basis", "loocv", "--seed", "7", "--out", str(out / "est_loocv.json")]),
        main(["ksweep", "--data", str(data), "--outcome", "y", "--treatment", "d", "--covariates", "x1",
              "--p", "0.002", "--k-grid", "10:200:10", "--seed", "7", "--out", str(out / "sweep.csv")]),
    ]
    files = sorted(p for p in out.rglob("*") if p.is_file())
    return codes, {p.relative_to(out): p.read_bytes() for p in files}


def test_criterion_11_cli_determinism(tmp_path):
    codes_a, a = _cli_outputs(tmp_path, "a")
    codes_b, b = _cli_outputs(tmp_path, "b")
    json.loads(a[next(k for k in a if k.name == "est.json")])
    ok = codes_a == codes_b == [0, 0, 0, 0] and a == b and len(a) == 6
    record_criterion(11, ok, f"{len(a)} output files from simulate/estimate/ksweep byte-identical across runs: {a == b}")
