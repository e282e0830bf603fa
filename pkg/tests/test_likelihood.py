import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_anomaly.graph import Dag, InterventionPattern
from causal_anomaly.likelihood import (
    LatentDraws,
    OutlierPriors,
    PriorSupportWarning,
    Rates,
    SampleEvaluator,
    bernoulli_log,
    binom_increment,
    log_joint,
    log_mean_exp,
    profile_bernoulli,
    profile_bernoulli_gain,
    uniform_prior_from_data,
)
from causal_anomaly.model import fit_scm
from causal_anomaly.synth import SynthSpec, generate
from conftest import chain_data
from oracles import fit_chain, quad_chain_density


def _pat(z, w):
    return InterventionPattern(tuple(map(bool, z)), tuple(map(bool, w)))


def test_bernoulli_log():
    assert bernoulli_log(1, 0.0035) == pytest.approx(-5.655, abs=1e-3)
    assert bernoulli_log(0, 0.0) == 0.0
    assert bernoulli_log(1, 0.0) == -math.inf
    with pytest.raises(ValueError):
        bernoulli_log(1, 1.5)


def test_binom_increment():
    assert binom_increment(2000, 0) == pytest.approx(7.6009, abs=1e-4)
    assert binom_increment(2, 0) == pytest.approx(math.log(2))
    assert binom_increment(2000, 999) == pytest.approx(0.0009995, abs=1e-7)
    with pytest.raises(ValueError):
        binom_increment(5, 5)
    for n, k in [(10, 3), (100, 0), (7, 6)]:
        ref = math.log(math.comb(n, k + 1)) - math.log(math.comb(n, k))
        assert binom_increment(n, k) == pytest.approx(ref, abs=1e-12)


@given(st.integers(2, 5000), st.data())
def test_profile_increment_bounded_by_binomial(n, data):
    k = data.draw(st.integers(0, (n - 1) // 2))
    assert profile_bernoulli_gain(k, n) <= -binom_increment(n, k) + 1e-9


def test_profile_bernoulli_matches_bernoulli_sum():
    n, k = 50, 7
    p = k / n
    assert profile_bernoulli(k, n) == pytest.approx(k * math.log(p) + (n - k) * math.log(1 - p))
    assert profile_bernoulli(0, n) == 0.0


def test_uniform_prior():
    data = np.column_stack([np.linspace(0, 10, 11), np.linspace(0, 100, 11)])
    pri = uniform_prior_from_data(data)
    assert pri.log_meas(0, 5.0) == pytest.approx(-math.log(10), abs=1e-8)
    assert pri.log_mech(0, 5.0) - pri.log_mech(1, 5.0) == pytest.approx(math.log(10), abs=1e-8)
    assert pri.mech_lo[0] < 0 < 10 < pri.mech_hi[0]
    with pytest.raises(ValueError, match="constant"):
        uniform_prior_from_data(np.column_stack([np.arange(5.0), np.ones(5)]))


def test_prior_outside_support_widens_with_warning():
    pri = OutlierPriors.shared([0.0], [1.0])
    with pytest.warns(PriorSupportWarning):
        assert pri.log_meas(0, 3.0) == pytest.approx(-math.log(3.0))


@pytest.fixture(scope="module")
def chain_model():
    data = chain_data(300, 0)
    return fit_scm(data, Dag.from_edges(3, [(0, 1), (1, 2)])), data


def test_all_zero_pattern_is_clean_product(chain_model):
    scm, data = chain_model
    x = data[5]
    rates = Rates.constant(3, 0.01)
    got = log_joint(x, InterventionPattern.empty(3), scm, rates=rates)
    ref = scm.residual_loglik(x[None, :])[0].sum() + 6 * math.log(0.99)
    assert got == pytest.approx(ref, abs=1e-10)


def test_zero_rate_with_indicator_is_minus_inf(chain_model):
    scm, data = chain_model
    got = log_joint(data[0], _pat((1, 0, 0), (0, 0, 0)), scm, rates=Rates.constant(3, 0.0))
    assert got == -math.inf


def test_single_node_measurement_integrates_out():
    x = np.random.default_rng(0).normal(size=(200, 1))
    scm = fit_scm(x, Dag(1))
    v = np.array([0.7])
    got = log_joint(v, _pat((0,), (1,)), scm, M=1000)
    assert got == pytest.approx(scm.priors.log_meas(0, 0.7), abs=1e-12)


def _synth_chain(seed):
    data, truth = generate(SynthSpec(d=2, N=500, edge_prob=1.0, seed=seed, rate=0.0))
    return fit_scm(data, truth.dag), data


@pytest.mark.parametrize("seed", range(4))
def test_chain_marginal_unbiased_against_quadrature(seed):
    scm, data = _synth_chain(seed)
    rng = np.random.default_rng(100 + seed)
    x = np.array([[rng.uniform(scm.priors.meas_lo[0], scm.priors.meas_hi[0]),
                   data[rng.integers(len(data)), 1]]])
    ref = quad_chain_density(scm, *x[0])
    ev = SampleEvaluator(scm, x, n_draws=1000)
    est = []
    for rep in range(40):
        ev._draws[0] = LatentDraws(rep, 0, 1000)
        est.append(math.exp(ev.log_marginal(0, (0, 0), (1, 0)) - ev.log_meas[0, 0]))
    est = np.array(est)
    se = est.std(ddof=1) / math.sqrt(est.size)
    assert abs(est.mean() - ref) < 3 * se + 1e-12


def test_chain_marginal_with_fitted_spline_chain():
    scm, data = fit_chain(0)
    x = [data[0, 0] + 1.0, data[0, 1]]
    ref = math.log(quad_chain_density(scm, *x)) + scm.priors.log_meas(0, x[0])
    got = log_joint(x, _pat((0, 0), (1, 0)), scm, M=20000, rng=1)
    assert abs(math.expm1(got - ref)) < 0.05


def test_mc_error_shrinks_like_inverse_sqrt():
    scm, data = _synth_chain(1)
    x = np.array([data[3, 0] + 0.5, data[3, 1]])
    pat = _pat((0, 0), (1, 0))
    logs, ses = [], []
    for M in (10, 100, 1000):
        ev = SampleEvaluator(scm, x[None, :], n_draws=M)
        est = []
        for rep in range(200):
            ev._draws[0] = LatentDraws(rep, 0, M)
            est.append(math.exp(ev.log_marginal(0, pat.mech, pat.meas) - ev.log_meas[0, 0]))
        ses.append(np.std(est, ddof=1))
        logs.append(math.log(M))
    slope = np.polyfit(logs, np.log(ses), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_rate_monotonicity(chain_model):
    scm, data = chain_model
    x = data[2]
    with_w = _pat((0, 0, 0), (0, 1, 0))
    without = InterventionPattern.empty(3)
    lo = Rates([0.01] * 3, [0.01, 0.01, 0.01])
    hi = Rates([0.01] * 3, [0.01, 0.05, 0.01])
    assert log_joint(x, with_w, scm, rates=hi) > log_joint(x, with_w, scm, rates=lo)
    assert log_joint(x, without, scm, rates=hi) < log_joint(x, without, scm, rates=lo)


@given(st.integers(0, 2**31 - 1), st.integers(0, 49))
@settings(max_examples=25, deadline=None)
def test_sink_symmetry_exact(seed, i):
    scm, data = _collider_model()
    rates = Rates([0.02, 0.03, 0.01], [0.05, 0.01, 0.01])
    ev_rates = rates
    for w0 in (False, True):
        zpat = _pat((0, 0, 1), (w0, 0, 0))
        wpat = _pat((0, 0, 0), (w0, 0, 1))
        a = log_joint(data[i], zpat, scm, rates=ev_rates, rng=seed)
        b = log_joint(data[i], wpat, scm, rates=ev_rates, rng=seed)
        assert a == b


_CACHE = {}


def _collider_model():
    if "c" not in _CACHE:
        rng = np.random.default_rng(5)
        x = rng.normal(size=(200, 3))
        x[:, 2] = np.tanh(x[:, 0]) + x[:, 1] ** 2 * 0.3 + 0.1 * rng.normal(size=200)
        _CACHE["c"] = (fit_scm(x, Dag.from_edges(3, [(0, 2), (1, 2)])), x)
    return _CACHE["c"]


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=200), st.randoms())
def test_log_mean_exp_exchangeable(vals, rnd):
    perm = list(vals)
    rnd.shuffle(perm)
    assert log_mean_exp(vals) == log_mean_exp(perm)
    assert log_mean_exp(vals) == pytest.approx(
        np.log(np.mean(np.exp(np.array(vals) - max(vals)))) + max(vals), abs=1e-9)


def test_bound_dominates_marginal(chain_model):
    scm, data = chain_model
    ev = SampleEvaluator(scm, data[:40])
    for i in range(40):
        for z, w in [((0, 0, 0), (1, 0, 0)), ((0, 0, 0), (1, 1, 0)), ((1, 0, 0), (1, 0, 0)),
                     ((0, 1, 0), (1, 0, 1))]:
            assert ev.log_marginal_bound(i, z, w) >= ev.log_marginal(i, z, w)


def test_draws_are_shared_across_patterns(chain_model):
    scm, data = chain_model
    ev = SampleEvaluator(scm, data[:1], seed=3)
    a = ev.log_marginal(0, (0, 0, 0), (1, 0, 0))
    ev.log_marginal(0, (0, 0, 0), (1, 1, 0))
    assert ev.log_marginal(0, (0, 0, 0), (1, 0, 0)) == a
    fresh = SampleEvaluator(scm, data[:1], seed=3)
    assert fresh.log_marginal(0, (0, 0, 0), (1, 0, 0)) == a


def test_both_indicators_draw_from_prior(chain_model):
    scm, data = chain_model
    ev = SampleEvaluator(scm, data[:1], seed=0, n_draws=50)
    ev.log_marginal(0, (1, 0, 0), (1, 0, 0))
    draws = ev.draws(0)._cache
    assert (0, 1) in draws and (0, 0) not in draws
    assert np.all((draws[(0, 1)] >= scm.priors.mech_lo[0]) & (draws[(0, 1)] <= scm.priors.mech_hi[0]))


def test_input_validation(chain_model):
    scm, data = chain_model
    with pytest.raises(ValueError):
        log_joint([np.nan, 0, 0], InterventionPattern.empty(3), scm)
    with pytest.raises(ValueError):
        log_joint(data[0], InterventionPattern.empty(3), scm, M=0)
