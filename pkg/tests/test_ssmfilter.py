import numpy as np
import pytest

from hfei.exceptions import NumericError
from hfei.ssmfilter import kalman_filter, loglikelihood, psd_sqrt, simulation_smoother, smoothed_state
from hfei.statespace import StateSpaceSystem

import oracles


@pytest.fixture
def case():
    c = oracles.filter_case()
    system = StateSpaceSystem(c["H"], c["F"], c["shock_slots"])
    return c, system, (system, c["Y"], c["sigmas"], (c["a0"], c["P0"]))


def test_loglik_matches_frozen_brute_force(case):
    _, _, args = case
    frozen = oracles.frozen()["filter_case_loglik"]
    assert kalman_filter(*args).loglik == pytest.approx(frozen, abs=1e-8)
    assert kalman_filter(*args, method="joint").loglik == pytest.approx(frozen, abs=1e-8)


def test_smoothed_mean_matches_conditioning(case):
    _, _, args = case
    np.testing.assert_allclose(smoothed_state(*args), oracles.frozen()["filter_case_smoothed_mean"], atol=1e-8)


def test_sequential_and_joint_paths_agree(case):
    _, _, args = case
    a = kalman_filter(*args)
    b = kalman_filter(*args, method="joint")
    np.testing.assert_allclose(a.updated_mean, b.updated_mean, atol=1e-8)
    np.testing.assert_allclose(a.updated_cov, b.updated_cov, atol=1e-8)
    np.testing.assert_allclose(a.loglik_t, b.loglik_t, atol=1e-8)


def test_all_missing_data_gives_zero_loglik_and_prior_moments(case):
    c, system, _ = case
    Y = np.full_like(c["Y"], np.nan)
    res = kalman_filter(system, Y, c["sigmas"], (c["a0"], c["P0"]))
    assert res.loglik == 0.0
    np.testing.assert_allclose(res.updated_mean[0], c["a0"])


def test_smoother_returns_loglik_of_the_data(case):
    _, _, args = case
    draw, ll = simulation_smoother(*args, rng=np.random.default_rng(1), return_loglik=True)
    assert draw.shape == (5, 3)
    assert ll == pytest.approx(loglikelihood(*args), abs=1e-10)


def test_smoother_is_seeded(case):
    _, _, args = case
    a = simulation_smoother(*args, rng=np.random.default_rng(5))
    b = simulation_smoother(*args, rng=np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_observed_states_are_reproduced(case):
    """A weekly-style identity row pins the state exactly."""
    F = np.array([[0.5]])
    system = StateSpaceSystem(np.array([[1.0]]), F, [0])
    Y = np.array([[0.3], [np.nan], [-0.2]])
    draw = simulation_smoother(system, Y, np.array([1.0]), rng=np.random.default_rng(0))
    assert draw[0, 0] == pytest.approx(0.3, abs=1e-6)
    assert draw[2, 0] == pytest.approx(-0.2, abs=1e-6)


def test_infinite_data_is_a_numeric_error(case):
    c, system, _ = case
    Y = c["Y"].copy()
    Y[2, 1] = np.inf
    with pytest.raises(NumericError, match="2"):
        kalman_filter(system, Y, c["sigmas"])


def test_psd_sqrt_handles_singular_matrices():
    P = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = psd_sqrt(P)
    np.testing.assert_allclose(L @ L.T, P, atol=1e-12)


def test_scalar_update_matches_hand_kalman_gain():
    """Measurement noise carried as a second state so the observation row stays noiseless."""
    a0, p0, noise_sd, y = 0.2, 1.5, 0.5, 1.1
    system = StateSpaceSystem(np.array([[1.0, 1.0]]), np.array([[0.6, 0.0], [0.0, 0.0]]), [0, 1])
    init = (np.array([a0, 0.0]), np.diag([p0, noise_sd ** 2]))
    res = kalman_filter(system, np.array([[y]]), np.array([0.8, noise_sd]), init)
    gain = p0 / (p0 + noise_sd ** 2)
    # the innovation variance carries a tiny jitter, hence 1e-9 rather than machine precision
    assert res.updated_mean[0, 0] == pytest.approx(a0 + gain * (y - a0), abs=1e-9)
    assert res.updated_cov[0, 0, 0] == pytest.approx((1 - gain) * p0, abs=1e-9)
