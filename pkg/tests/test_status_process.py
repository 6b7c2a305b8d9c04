import numpy as np
import pytest
from hypothesis import given, strategies as st

from loiu.status_process import (BeliefGaussian, EstimatorState, StatusValue, WienerParams, advance_status,
                                 advance_statuses, belief_mean, belief_second_moment, estimation_error,
                                 update_estimate, update_estimates)


def test_wiener_params_reject_nonpositive():
    with pytest.raises(ValueError):
        WienerParams(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        WienerParams(np.array([]))


def test_wiener_sample_in_range(rng):
    p = WienerParams.sample(1000, (0.001, 10.0), rng)
    s = np.sqrt(p.sigma_sq)
    assert s.min() >= 0.001 and s.max() <= 10.0


def test_zero_variance_is_identity(rng):
    x = StatusValue(3.5, 7)
    y = advance_status(x, 0.0, rng)
    assert y.x == 3.5 and y.t == 8


def test_negative_variance_rejected(rng):
    with pytest.raises(ValueError):
        advance_status(StatusValue(0.0), -1.0, rng)


def test_increment_variance_monte_carlo(rng):
    # sigma_sq = 4: sample variance of 1e5 increments within 3% of 4
    x = np.zeros(100_000)
    y = advance_statuses(x, np.full_like(x, 4.0), rng)
    assert abs(np.var(y) - 4.0) / 4.0 < 0.03


def test_received_resets_error_and_tau():
    prev = EstimatorState(x_hat=1.0, tau=4, xi_last=0)
    x = StatusValue(2.7, 10)
    new = update_estimate(1, x, prev)
    assert new.tau == 0 and new.x_hat == 2.7
    assert estimation_error(1, x, prev) == 0.0


def test_missed_update_holds_estimate():
    prev = EstimatorState(x_hat=1.0, tau=0, xi_last=1)
    x = StatusValue(2.5, 3)
    new = update_estimate(0, x, prev)
    assert new.tau == 1 and new.x_hat == 1.0
    assert estimation_error(0, x, prev) == pytest.approx(1.5)


def test_estimator_state_invariant():
    with pytest.raises(ValueError):
        EstimatorState(0.0, tau=0, xi_last=0)
    with pytest.raises(ValueError):
        EstimatorState(0.0, tau=3, xi_last=1)


def test_belief_second_moment_examples():
    assert belief_second_moment(0, 3, 2.0) == 6.0
    assert belief_second_moment(1, 0, 5.0) == 0.0
    assert belief_mean(0, 3, 2.0) == 0.0
    with pytest.raises(ValueError):
        belief_second_moment(0, -1, 1.0)


def test_belief_moment_monte_carlo(rng):
    # sigma_sq = 1, five missed slots: E[e^2] = 5 within 3%
    e = np.zeros(100_000)
    for _ in range(5):
        e = advance_statuses(e, np.ones_like(e), rng)
    assert abs(np.mean(e**2) - 5.0) / 5.0 < 0.03
    assert abs(np.mean(e)) < 3 * np.sqrt(5.0 / e.size)


@given(tau=st.integers(0, 1000), sigma_sq=st.floats(1e-6, 100.0))
def test_belief_variance_property(tau, sigma_sq):
    b = BeliefGaussian.from_estimator(0, tau, sigma_sq)
    assert b.variance == pytest.approx(tau * sigma_sq)
    assert b.mean == 0.0
    assert BeliefGaussian.from_estimator(1, 0, sigma_sq).variance == 0.0


@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_staleness_counts_slots_since_reception(received):
    xi = np.zeros((1, 1), dtype=np.int8)
    x_hat, tau = np.zeros((1, 1)), np.zeros((1, 1), dtype=np.int64)
    since = 0
    for t, r in enumerate(received):
        xi[0, 0] = r
        x_hat, tau, err = update_estimates(xi, np.array([float(t)]), x_hat, tau)
        since = 0 if r else since + 1
        assert tau[0, 0] == since
        assert (err[0, 0] == 0.0) == (r or x_hat[0, 0] == t)
