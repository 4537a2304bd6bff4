import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extremal_qte.distributions import true_model_quantile
from extremal_qte.errors import DegenerateWeightsError, EmptyArmError
from extremal_qte.ipw_quantile import ipw_arm_quantile, pinball_loss, weighted_quantile
from extremal_qte.propensity import Sample
from extremal_qte.simulation import generate, true_propensity


def brute_force_quantile(values, weights, tau):
    """Minimizer of the pinball loss over the observed values (smallest on ties)."""
    cands = np.unique(values)
    losses = [pinball_loss(values, weights, tau, q) for q in cands]
    return float(cands[int(np.argmin(losses))])


def test_small_examples():
    assert weighted_quantile([1, 2, 3, 4], [1, 1, 1, 1], 0.5) == 2
    for tau in (0.01, 0.5, 0.99):
        assert weighted_quantile([10.0], [3.0], tau) == 10


def test_random_against_pinball_oracle():
    rng = np.random.default_rng(0)
    values = rng.normal(size=50)
    weights = rng.exponential(size=50)
    assert weighted_quantile(values, weights, 0.9) == brute_force_quantile(values, weights, 0.9)


def test_zero_weights_rejected():
    with pytest.raises(DegenerateWeightsError):
        weighted_quantile([1, 2], [0, 0], 0.5)


def test_ties_are_merged_order_independent():
    v = np.array([3, 1, 3, 2, 1])
    w = np.array([0.2, 0.5, 0.1, 0.4, 0.3])
    perm = np.array([4, 2, 0, 3, 1])
    for tau in np.linspace(0.05, 0.95, 19):
        assert weighted_quantile(v, w, tau) == weighted_quantile(v[perm], w[perm], tau)


values_st = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(values_st, st.floats(0.01, 0.99), st.floats(0.1, 100), st.data())
def test_equivariance_and_weight_invariance(values, tau, c, data):
    w = data.draw(st.lists(st.floats(0.01, 10), min_size=len(values), max_size=len(values)))
    base = weighted_quantile(values, w, tau)
    assert weighted_quantile(np.array(values) * c, w, tau) == pytest.approx(c * base, rel=1e-12, abs=1e-300)
    assert base in values
    # power-of-two scaling keeps the cumulative sums exact
    assert weighted_quantile(values, np.array(w) * 4.0, tau) == base


@settings(max_examples=100, deadline=None)
@given(values_st, st.floats(0.01, 0.98), st.floats(0.0, 0.5), st.data())
def test_monotone_in_tau(values, tau, step, data):
    w = data.draw(st.lists(st.floats(0.01, 10), min_size=len(values), max_size=len(values)))
    tau2 = min(tau + step, 0.99)
    assert weighted_quantile(values, w, tau) <= weighted_quantile(values, w, tau2)


def test_reduction_to_classical_quantile(rng):
    y = rng.standard_t(3, 101)
    s = Sample(y, np.ones(101, dtype=int), rng.random(101))
    est = ipw_arm_quantile(s, np.ones(101), 1, 0.3)
    assert est.value == np.sort(y)[int(np.ceil(0.3 * 101)) - 1]
    assert est.effective_weight_sum == 101


def test_constant_propensity_cancels(rng):
    n = 400
    d = (rng.random(n) < 0.5).astype(int)
    y = rng.normal(size=n)
    s = Sample(y, d, rng.random(n))
    est = ipw_arm_quantile(s, 0.5, 1, 0.8)
    assert est.value == weighted_quantile(y[d == 1], np.ones(d.sum()), 0.8)


def test_empty_arm():
    s = Sample([1.0, 2.0], [1, 1], [0.1, 0.2])
    with pytest.raises(EmptyArmError):
        ipw_arm_quantile(s, 0.5, 0, 0.5)


@pytest.mark.slow
def test_h1_intermediate_quantile_accuracy():
    target = true_model_quantile("h1", 1, 0.95)
    hits = 0
    for seed in range(200):
        s = generate("h1", 5000, seed)
        est = ipw_arm_quantile(s, true_propensity(s.x[:, 0]), 1, 0.95)
        hits += abs(est.value / target - 1) <= 0.10
    assert hits >= 190
