import math
import warnings

import numpy as np
import pytest

from extremal_qte.distributions import Pareto, true_quantile, true_tail_quantile
from extremal_qte.errors import OrderingError, ParameterError, PositivityError
from extremal_qte.extrapolation import (
    ExtrapolationConfig,
    ExtrapolationRangeWarning,
    extrapolate_quantile,
    extremal_qte,
    firpo_zhang_qte,
    k_sweep,
    normalizing_factor,
    pickands_qte,
)
from extremal_qte.ipw_quantile import QuantileEstimate
from extremal_qte.propensity import Sample
from extremal_qte.simulation import generate, run_cell, true_propensity


def q(value, tau):
    return QuantileEstimate(1, 1.0 - tau, value, 1.0)


def test_extrapolation_examples():
    assert extrapolate_quantile(q(10.0, 0.05), 0.5, 0.0005) == pytest.approx(100.0, rel=1e-14)
    assert extrapolate_quantile(q(7.5, 0.05), 0.0, 1e-6) == 7.5
    with pytest.raises(OrderingError):
        extrapolate_quantile(q(7.5, 0.05), 0.5, 0.06)
    with pytest.raises(PositivityError):
        extrapolate_quantile(q(-1.0, 0.05), 0.5, 0.01)


@pytest.mark.parametrize("alpha", [0.5, 1.75, 3.0])
@pytest.mark.parametrize("b", [0.2, 1.0, 40.0])
def test_pareto_exact(alpha, b):
    law = Pareto(alpha, b)
    for tau, p in [(0.1, 1e-3), (0.05, 1e-6), (0.2, 0.19)]:
        qi = QuantileEstimate(1, 1 - tau, true_tail_quantile(law, tau), 1.0)
        got = extrapolate_quantile(qi, 1 / alpha, p, tail=tau)
        assert got == pytest.approx(true_tail_quantile(law, p), rel=1e-12)


def test_normalizing_factor_example():
    beta = normalizing_factor(100.0, 0.1, 0.001, 50.0, 20.0)
    assert beta == pytest.approx(10 / (math.log(100) * 50), rel=1e-14)
    assert beta == pytest.approx(0.04342944819032518, rel=1e-12)


def test_config_validation():
    with pytest.raises(OrderingError):
        ExtrapolationConfig(n=100, k=10, p=0.1)
    with pytest.raises(ParameterError):
        ExtrapolationConfig(n=100, k=100, p=0.01)
    cfg = ExtrapolationConfig.with_default_k(2000, 5 / 2000)
    assert cfg.k == pytest.approx(2000**0.65)


@pytest.fixture(scope="module")
def h2_sample():
    s = generate("h2", 2000, 11)
    return s, true_propensity(s.x[:, 0])


def test_arm_swap_antisymmetry(h2_sample):
    s, pi = h2_sample
    cfg = ExtrapolationConfig.with_default_k(s.n, 5 / s.n)
    res = extremal_qte(s, pi, cfg)
    swapped = extremal_qte(Sample(s.y, 1 - s.d, s.x), 1 - pi, cfg)
    assert swapped.delta == pytest.approx(-res.delta, rel=1e-13)
    assert swapped.q1_extreme == res.q0_extreme
    assert swapped.sigma2_hat == pytest.approx(res.sigma2_hat, rel=1e-10)


@pytest.mark.parametrize("c", [0.5, 4.0, 1000.0])
def test_scale_equivariance(h2_sample, c):
    s, pi = h2_sample
    cfg = ExtrapolationConfig.with_default_k(s.n, 5 / s.n)
    base = extremal_qte(s, pi, cfg)
    scaled = extremal_qte(Sample(c * s.y, s.d, s.x), pi, cfg)
    assert scaled.delta == pytest.approx(c * base.delta, rel=1e-12)
    assert scaled.ci[0] == pytest.approx(c * base.ci[0], rel=1e-12)
    assert scaled.ci[1] == pytest.approx(c * base.ci[1], rel=1e-12)
    assert scaled.gamma1.gamma == pytest.approx(base.gamma1.gamma, rel=1e-12)


def test_deterministic(h2_sample):
    s, pi = h2_sample
    cfg = ExtrapolationConfig.with_default_k(s.n, 1 / s.n)
    assert extremal_qte(s, pi, cfg).to_dict() == extremal_qte(s, pi, cfg).to_dict()


def test_identical_arms_centred_at_zero():
    deltas = []
    for seed in range(200):
        rng = np.random.default_rng([seed, 31])
        n = 5000
        s = Sample(np.exp(rng.standard_exponential(n) / 2), (rng.random(n) < 0.5).astype(int), rng.random(n))
        deltas.append(extremal_qte(s, 0.5, ExtrapolationConfig.with_default_k(n, 5 / n)).delta)
    deltas = np.array(deltas)
    assert abs(deltas.mean()) <= 2 * deltas.std(ddof=1) / np.sqrt(deltas.size)


def test_identical_arms_give_zero_effect(rng):
    n = 600
    y = np.exp(rng.standard_exponential(n // 2) / 2)
    s = Sample(np.concatenate([y, y]), np.repeat([1, 0], n // 2), rng.random(n))
    res = extremal_qte(s, 0.5, ExtrapolationConfig(n=n, k=60, p=0.001))
    assert res.delta == 0.0
    assert res.kappa_hat == 1.0
    assert res.ci[0] <= 0.0 <= res.ci[1]


def test_ci_contains_estimate_and_json(h2_sample):
    s, pi = h2_sample
    res = extremal_qte(s, pi, ExtrapolationConfig.with_default_k(s.n, 5 / s.n))
    assert res.ci[0] < res.delta < res.ci[1]
    doc = res.to_dict()
    assert doc["schema_version"] == 1 and doc["ci"]["level"] == pytest.approx(0.9)


def test_range_warning(h2_sample):
    s, pi = h2_sample
    with pytest.warns(ExtrapolationRangeWarning):
        extremal_qte(s, pi, ExtrapolationConfig(n=s.n, k=4, p=1e-9))


def test_firpo_zhang_saturates_beyond_sample(h2_sample):
    s, pi = h2_sample
    est = firpo_zhang_qte(s, pi, 5 / (s.n * math.log(s.n)))
    assert est.saturated
    assert est.q1 == s.y[s.d == 1].max()


def test_pickands_needs_room(h2_sample):
    s, pi = h2_sample
    with pytest.raises(Exception):
        pickands_qte(s, pi, ExtrapolationConfig(n=s.n, k=600, p=0.001))


def test_hill_beats_pickands_on_h2():
    hill, pick = run_cell("h2", 5000, "5_over_nlogn", ["hill", "pickands"], reps=100, master_seed=3)
    med = lambda rep: np.median([r.squared_error for r in rep.completed])
    assert med(hill) < med(pick)


class TestKSweep:
    def test_single_matches_direct(self, h2_sample):
        s, pi = h2_sample
        cfg = ExtrapolationConfig(n=s.n, k=100, p=5 / s.n)
        (row,) = k_sweep(s, pi, cfg, [100])
        res = extremal_qte(s, pi, cfg)
        assert (row.delta, row.ci_lo, row.ci_hi) == (res.delta, *res.ci)
        assert row.error == ""

    def test_duplicates_identical(self, h2_sample):
        s, pi = h2_sample
        cfg = ExtrapolationConfig(n=s.n, k=100, p=5 / s.n)
        a, b = k_sweep(s, pi, cfg, [80, 80])
        assert a == b

    def test_bad_k_kept_as_error_row(self, h2_sample):
        s, pi = h2_sample
        cfg = ExtrapolationConfig(n=s.n, k=100, p=0.01)
        rows = k_sweep(s, pi, cfg, [10, 100])
        assert rows[0].error.startswith("OrderingError") and math.isnan(rows[0].delta)
        assert rows[1].error == "" and math.isfinite(rows[1].delta)

    def test_h1_smoke(self):
        s = generate("h1", 2000, 2)
        cfg = ExtrapolationConfig(n=s.n, k=200, p=5 / s.n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rows = k_sweep(s, true_propensity(s.x[:, 0]), cfg, range(20, 201, 10))
        assert [r.k for r in rows] == list(range(20, 201, 10))
        assert all(r.error == "" and math.isfinite(r.delta) for r in rows)
