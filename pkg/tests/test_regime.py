import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from hfei.exceptions import InputError
from hfei.regime import (MarkovSwitchingRecession, RegimeSpec, _draw_means, date_recessions, episodes, fit_regime,
                         in_recession, sample_regime_path, transition_posterior)
from hfei.simulate import simulate_regime_path

import oracles

FAST = RegimeSpec(n_iter=400, burn_in=100)


def test_spec_defaults_and_checks():
    s = RegimeSpec()
    assert (s.m0, s.m1, s.a_p, s.b_p, s.n_iter, s.burn_in) == (-1.0, 1.0, 9.0, 1.0, 2000, 500)
    assert s.kept == 1500
    with pytest.raises(InputError):
        RegimeSpec(n_iter=10, burn_in=10)
    with pytest.raises(InputError):
        RegimeSpec(v0=0.0)


def test_episodes_and_counts():
    states = [1, 1, 0, 0, 0, 1]
    assert episodes(states) == [(1, 0, 2), (0, 2, 5), (1, 5, 6)]
    assert episodes([]) == []


@given(st.lists(st.integers(0, 1), min_size=2, max_size=60))
def test_beta_update_matches_explicit_count(states):
    spec = RegimeSpec(a_p=2.0, b_p=3.0, a_q=4.0, b_q=5.0)
    assert transition_posterior(states, spec) == oracles.beta_update(states, 2.0, 3.0, 4.0, 5.0)


def test_path_draw_separates_clear_levels():
    y = np.r_[np.full(30, 2.0), np.full(20, -2.0), np.full(30, 2.0)]
    spec = RegimeSpec(m0=-2, m1=2, v0=0.01, v1=0.01)
    states = sample_regime_path(y, spec, 0.95, 0.95, 0.05, np.random.default_rng(0))
    np.testing.assert_array_equal(states, np.r_[np.ones(30), np.zeros(20), np.ones(30)])


def test_ordering_constraint_holds_for_every_draw(caplog):
    rng = np.random.default_rng(1)
    y = rng.standard_normal(40)
    eps = [(1, 0, 10), (0, 10, 20), (1, 20, 30), (0, 30, 40)]
    with caplog.at_level(logging.WARNING):
        for _ in range(200):
            mu, _ = _draw_means(y, eps, RegimeSpec(), 1.0, rng)
            assert max(mu[1], mu[3]) < (mu[0] + mu[2]) / 2


def test_constant_path_has_no_recession():
    spec = RegimeSpec(n_iter=400, burn_in=100, m0=-3, v0=0.01, m1=0, v1=0.01)
    post = fit_regime(np.zeros(120), spec, seed=0)
    assert post.recession_prob.max() < 0.05
    assert post.recessions == []


def test_recovers_simulated_regimes():
    y, states = simulate_regime_path(-1.5, 1.0, 0.4, 0.97, 0.9, 300, seed=3, start_state=1)
    post = fit_regime(y, FAST, seed=0)
    assert np.mean(post.classification == states) > 0.95
    assert post.recession_mean.mean() < post.expansion_mean.mean()


def test_mirror_symmetry():
    """Flipping the data and swapping the priors swaps the regimes."""
    y, _ = simulate_regime_path(-1.5, 1.5, 0.4, 0.95, 0.95, 200, seed=8)
    base = RegimeSpec(n_iter=400, burn_in=100, m0=-1, m1=1, order_means=False)
    a = fit_regime(y, base, seed=2)
    b = fit_regime(-y, base, seed=2)
    np.testing.assert_allclose(a.recession_prob, 1.0 - b.recession_prob, atol=0.1)


def test_seeded_fit_is_reproducible():
    y, _ = simulate_regime_path(-1, 1, 0.5, 0.95, 0.9, 100, seed=1)
    a = fit_regime(y, FAST, seed=4)
    b = fit_regime(y, FAST, seed=4)
    assert np.array_equal(a.recession_prob, b.recession_prob)


def test_dating_example():
    prob = np.array([0.1, 0.55, 0.7, 0.9, 0.6, 0.45, 0.4, 0.3, 0.1, 0.2])
    (r,) = date_recessions(prob, stamps=list("abcdefghij"))
    assert (r.start, r.call, r.end, r.end_call) == (1, 2, 5, 7)
    assert (r.start_stamp, r.end_stamp) == ("b", "f")
    flag, ident = in_recession(prob.size, [r])
    assert flag.tolist() == [0, 1, 1, 1, 1, 0, 0, 0, 0, 0]
    assert ident.max() == 1


def test_ongoing_and_empty():
    (r,) = date_recessions([0.2, 0.7, 0.8, 0.6])
    assert r.ongoing and r.end is None
    assert in_recession(4, [r])[0].tolist() == [0, 1, 1, 1]
    assert date_recessions([0.1, 0.65, 0.5]) == []
    with pytest.raises(InputError):
        date_recessions([0.2, 1.2])


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=80))
def test_dated_recessions_are_ordered_and_disjoint(prob):
    recs = date_recessions(prob)
    last = -1
    for r in recs:
        assert prob[r.call] > 0.65
        assert r.start <= r.call
        assert r.start > last
        if r.end is not None:
            assert r.call < r.end
        if r.end_call is not None:
            assert r.end is not None and r.end <= r.end_call
            last = r.end_call
        else:
            assert r is recs[-1]
    flag, _ = in_recession(len(prob), recs)
    assert flag.sum() == sum((len(prob) if r.end is None else r.end) - r.start for r in recs)


def test_estimator_wrapper():
    y, states = simulate_regime_path(-1.5, 1.0, 0.4, 0.97, 0.9, 200, seed=5, start_state=1)
    est = MarkovSwitchingRecession(n_iter=300, burn_in=100, random_state=0)
    assert clone(est).get_params() == est.get_params()
    flags = est.fit_predict(y[:, None])
    assert flags.shape == (200,)
    proba = est.predict_proba()
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    with pytest.raises(InputError):
        est.fit(np.ones((10, 2)))
