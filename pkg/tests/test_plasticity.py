import numpy as np
import pytest

from spikekal.errors import ModelValidationError
from spikekal.plasticity import (
    EligibilityTrace,
    PlasticityParams,
    accumulate_eligibility,
    apply_stdp,
    compute_reward,
    rstdp_apply,
    stdp_eligibility,
)

PARAMS = PlasticityParams(a_plus=0.1, a_minus=0.12, tau_plus=0.020, tau_minus=0.020)


class TestStdpEligibility:
    def test_causal_substitution(self):
        value = stdp_eligibility(0.020, PARAMS)
        assert value == pytest.approx(0.1 * np.exp(-1.0), abs=1e-5)
        assert value == pytest.approx(0.03679, abs=1e-5)

    def test_anticausal_substitution(self):
        value = stdp_eligibility(-0.020, PARAMS)
        assert value == pytest.approx(-0.12 * np.exp(-1.0), abs=1e-5)
        assert value == pytest.approx(-0.04415, abs=1e-5)

    def test_decays_to_zero_at_long_lags(self):
        params = PlasticityParams(a_plus=0.1, a_minus=0.1, tau_plus=0.020, tau_minus=0.020)
        assert abs(stdp_eligibility(10 * 0.020, params)) < 5e-6
        assert abs(stdp_eligibility(-10 * 0.020, params)) < 5e-6

    def test_simultaneous_contributes_nothing(self):
        assert stdp_eligibility(0.0, PARAMS) == 0.0

    def test_sign_structure(self):
        assert stdp_eligibility(0.001, PARAMS) > 0
        assert stdp_eligibility(-0.001, PARAMS) < 0


class TestAccumulate:
    def test_no_spikes_only_decay(self):
        trace = EligibilityTrace.zeros(2, 3, tau_elig=0.05)
        trace.e[:] = 1.0
        accumulate_eligibility(trace, np.zeros(3, bool), np.zeros(2, bool), 0.05, PARAMS)
        np.testing.assert_allclose(trace.e, np.exp(-1.0))

    def test_causal_pair(self):
        trace = EligibilityTrace.zeros(1, 1, tau_elig=1e9)
        accumulate_eligibility(trace, np.array([True]), np.array([False]), 0.0, PARAMS)
        accumulate_eligibility(trace, np.array([False]), np.array([True]), 0.005, PARAMS)
        assert trace.e[0, 0] == pytest.approx(0.1 * np.exp(-0.005 / 0.020))

    def test_anticausal_pair(self):
        trace = EligibilityTrace.zeros(1, 1, tau_elig=1e9)
        accumulate_eligibility(trace, np.array([False]), np.array([True]), 0.0, PARAMS)
        accumulate_eligibility(trace, np.array([True]), np.array([False]), 0.005, PARAMS)
        assert trace.e[0, 0] == pytest.approx(-0.12 * np.exp(-0.005 / 0.020))

    def test_simultaneous_pair_contributes_nothing(self):
        trace = EligibilityTrace.zeros(1, 1, tau_elig=1e9)
        accumulate_eligibility(trace, np.array([True]), np.array([True]), 0.01, PARAMS)
        assert trace.e[0, 0] == 0.0

    def test_nearest_neighbor_uses_most_recent(self):
        trace = EligibilityTrace.zeros(1, 1, tau_elig=1e9)
        accumulate_eligibility(trace, np.array([True]), np.array([False]), 0.000, PARAMS)
        accumulate_eligibility(trace, np.array([True]), np.array([False]), 0.010, PARAMS)
        accumulate_eligibility(trace, np.array([False]), np.array([True]), 0.015, PARAMS)
        # pairs against the pre spike at t=0.010, not t=0
        assert trace.e[0, 0] == pytest.approx(0.1 * np.exp(-0.005 / 0.020))


class TestRstdpApply:
    def test_zero_reward_is_noop(self):
        W = np.full((2, 2), 0.5)
        trace = EligibilityTrace.zeros(2, 2)
        trace.e[:] = 1.0
        rstdp_apply(W, trace, np.zeros(2), PARAMS)
        np.testing.assert_array_equal(W, np.full((2, 2), 0.5))

    def test_substitution(self):
        params = PlasticityParams(lr=1.0)
        W = np.zeros((1, 1))
        trace = EligibilityTrace.zeros(1, 1)
        trace.e[0, 0] = 0.5
        rstdp_apply(W, trace, np.array([1.0]), params)
        assert W[0, 0] == pytest.approx(0.5)

    def test_reward_sign_flips_update(self):
        params = PlasticityParams(lr=1.0, w_min=-10.0, w_max=10.0)
        trace = EligibilityTrace.zeros(1, 3)
        trace.e[0] = [0.2, -0.1, 0.05]
        W_plus = np.zeros((1, 3))
        W_minus = np.zeros((1, 3))
        rstdp_apply(W_plus, trace, np.array([1.0]), params)
        rstdp_apply(W_minus, trace, np.array([-1.0]), params)
        np.testing.assert_allclose(W_plus, -W_minus)

    def test_weights_stay_clamped(self):
        rng = np.random.default_rng(4)
        params = PlasticityParams(lr=5.0, w_min=0.0, w_max=1.0)
        W = rng.uniform(0, 1, (3, 4))
        trace = EligibilityTrace.zeros(3, 4)
        for _ in range(100):
            trace.e = rng.standard_normal((3, 4))
            rstdp_apply(W, trace, rng.uniform(-1, 1, 3), params)
            assert (W >= 0.0).all() and (W <= 1.0).all()

    def test_plain_stdp_mode(self):
        params = PlasticityParams(lr=1.0, w_min=-10.0, w_max=10.0)
        W = np.zeros((1, 2))
        trace = EligibilityTrace.zeros(1, 2)
        trace.e[0] = [0.3, -0.2]
        apply_stdp(W, trace, params)
        np.testing.assert_allclose(W[0], [0.3, -0.2])


class TestComputeReward:
    def test_converged_reward_is_zero(self):
        K = np.array([[0.5], [0.2]])
        np.testing.assert_array_equal(compute_reward(K, K), np.zeros(2))

    def test_underestimate_rewarded_positively(self):
        r = compute_reward(np.array([1.0]), np.array([0.5]))
        assert r[0] > 0

    def test_clamped_to_unit_interval(self):
        r = compute_reward(np.array([7.0]), np.array([0.0]), scale=1.0)
        assert r[0] == 1.0
        r = compute_reward(np.array([-7.0]), np.array([0.0]), scale=1.0)
        assert r[0] == -1.0

    def test_global_mode_averages(self):
        r = compute_reward(
            np.array([0.4, 0.0]), np.array([0.0, 0.0]), global_reward=True
        )
        np.testing.assert_allclose(r, [0.2, 0.2])


class TestParamsValidation:
    def test_bounds_ordering(self):
        with pytest.raises(ModelValidationError):
            PlasticityParams(w_min=1.0, w_max=0.0)

    def test_positive_amplitudes(self):
        with pytest.raises(ModelValidationError):
            PlasticityParams(a_plus=0.0)
