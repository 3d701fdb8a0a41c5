import numpy as np
import pytest

from dither_lqg.codec import DecodedMeasurement, NoiseTerms, StrategyKind
from dither_lqg.errors import ParityError, SingularInnovation
from dither_lqg.filters import (
    FilterState,
    SteadyStateEstimator,
    covariance_recursion,
    filtered_covariance,
    kalman_gain,
    kf_step_I,
    kf_step_II,
    kf_step_III,
    steady_state,
)
from dither_lqg.linalg import psd_leq, spectral_radius
from dither_lqg.plant import CostWeights, PlantModel, lqr_gain

from conftest import scalar_weights, strategy

STRATEGIES = [("I", None), ("II", None), ("III", 1)]


@pytest.fixture
def static_plant() -> PlantModel:
    return PlantModel(A=0.0, B=1, C=1, Q=1, R=1)


@pytest.fixture
def two_state_plant() -> PlantModel:
    rng = np.random.default_rng(12)
    a = rng.standard_normal((2, 2))
    a *= 1.05 / spectral_radius(a)
    return PlantModel(A=a, B=rng.standard_normal((2, 1)), C=rng.standard_normal((1, 2)), Q=np.eye(2), R=0.5)


def _reading(t, p, p_prime=None):
    return DecodedMeasurement(t, np.asarray(p, dtype=float), None if p_prime is None else np.asarray(p_prime, dtype=float))


class TestSingleSteps:
    def test_static_gain_moves_halfway(self, static_plant):
        state = FilterState.initial(static_plant)
        np.testing.assert_allclose(kalman_gain(static_plant, state.sigma_pred, 0.0), [[0.5]])
        nxt = kf_step_I(state, 2.0, static_plant, np.zeros((1, 1)), 0.0)
        np.testing.assert_allclose(nxt.x_filt, [1.0])

    def test_zero_innovation_keeps_the_prediction(self, scalar_plant):
        K = lqr_gain(scalar_plant, scalar_weights(1.0)).K
        state = FilterState(x_pred=np.array([0.7]), sigma_pred=np.eye(1))
        nxt = kf_step_I(state, 0.7, scalar_plant, K, 0.3)
        np.testing.assert_allclose(nxt.x_filt, [0.7])
        np.testing.assert_allclose(nxt.x_pred, 0.7 * (scalar_plant.A - scalar_plant.B @ K)[0])

    def test_strategy_ii_zero_innovation(self, scalar_plant):
        K = lqr_gain(scalar_plant, scalar_weights(1.0)).K
        closed = (scalar_plant.A - scalar_plant.B @ K)[0, 0]
        state = FilterState(x_pred=np.array([0.5]), sigma_pred=np.eye(1))
        s = 0.2
        state = kf_step_II(state, _reading(0, 0.5), scalar_plant, K, s, s)
        np.testing.assert_allclose(state.x_filt, [0.5])
        state = kf_step_II(state, _reading(1, 0.5), scalar_plant, K, s, s)
        np.testing.assert_allclose(state.x_filt, [closed * 0.5])
        assert state.parity == 0

    def test_strategy_iii_zero_innovations(self, scalar_plant):
        K = lqr_gain(scalar_plant, scalar_weights(1.0)).K
        A, BK = scalar_plant.A[0, 0], (scalar_plant.B @ K)[0, 0]
        state = FilterState(x_pred=np.array([0.5]), sigma_pred=np.eye(1))
        state = kf_step_III(state, _reading(0, 0.5), scalar_plant, K, 0.3, 0.1, 0.5)
        x_odd = A * 0.5 - BK * 0.5
        state = kf_step_III(state, _reading(1, x_odd, p_prime=0.5), scalar_plant, K, 0.3, 0.1, 0.5)
        np.testing.assert_allclose(state.x_filt, [x_odd])

    def test_phase_is_checked(self, scalar_plant):
        K = np.zeros((1, 1))
        state = FilterState.initial(scalar_plant)
        with pytest.raises(ParityError):
            kf_step_II(state, _reading(1, 0.0), scalar_plant, K, 0.1, 0.01)
        state = kf_step_III(state, _reading(0, 0.0), scalar_plant, K, 0.1, 0.01, 0.2)
        with pytest.raises(ParityError):
            kf_step_III(state, _reading(1, 0.0), scalar_plant, K, 0.1, 0.01, 0.2)

    def test_singular_innovation(self):
        plant = PlantModel(A=0.5, B=1, C=0, Q=1, R=0)
        with pytest.raises(SingularInnovation):
            kalman_gain(plant, plant.Q, 0.0)


class TestCovarianceRecursion:
    @pytest.mark.parametrize("kind, r", STRATEGIES)
    def test_recursion_reaches_steady_state_scalar(self, scalar_plant, kind, r):
        cfg = strategy(kind, 3, 14.50, r=r)
        gains = steady_state(scalar_plant, cfg)
        sigma = covariance_recursion(scalar_plant, cfg.kind, cfg.noise_terms(), 2000)
        np.testing.assert_allclose(sigma, gains.sigma_pred, rtol=1e-8)

    @pytest.mark.parametrize("kind, r", STRATEGIES)
    def test_recursion_reaches_steady_state_two_states(self, two_state_plant, kind, r):
        cfg = strategy(kind, 2, 3.0, r=r)
        gains = steady_state(two_state_plant, cfg)
        sigma = covariance_recursion(two_state_plant, cfg.kind, cfg.noise_terms(), 2000)
        np.testing.assert_allclose(sigma, gains.sigma_pred, rtol=1e-8, atol=1e-9)

    @pytest.mark.parametrize("kind, r", STRATEGIES)
    def test_filter_steps_track_the_recursion(self, scalar_plant, kind, r):
        cfg = strategy(kind, 3, 9.15, r=r)
        noise = cfg.noise_terms()
        K = lqr_gain(scalar_plant, scalar_weights(100.0)).K
        state = FilterState.initial(scalar_plant)
        for t in range(400 if kind == "I" else 800):
            reading = _reading(t, 0.0, p_prime=0.0)
            if kind == "I":
                state = kf_step_I(state, reading.p, scalar_plant, K, noise.s_b)
            elif kind == "II":
                state = kf_step_II(state, reading, scalar_plant, K, noise.s_b, noise.s_2b)
            else:
                state = kf_step_III(state, reading, scalar_plant, K, noise.s_b, noise.s_b_plus_r, noise.s_b_minus_r)
        np.testing.assert_allclose(state.sigma_pred, steady_state(scalar_plant, cfg).sigma_pred, rtol=1e-8)

    def test_iii_collapses_to_two_ordinary_updates(self, two_state_plant):
        s = 0.3
        lifted = covariance_recursion(two_state_plant, StrategyKind.III, NoiseTerms(s, s_b_plus_r=s, s_b_minus_r=s), 7)
        plain = covariance_recursion(two_state_plant, StrategyKind.I, NoiseTerms(s), 14)
        np.testing.assert_allclose(lifted, plain, rtol=1e-12)

    def test_zero_dynamics_lifted_prediction_is_q(self, static_plant):
        sigma = covariance_recursion(static_plant, StrategyKind.II, NoiseTerms(0.1, s_2b=0.01), 3)
        np.testing.assert_allclose(sigma, static_plant.Q)


class TestSteadyState:
    def test_zero_dynamics(self, static_plant):
        cfg = strategy("I", 3, 2.0)
        gains = steady_state(static_plant, cfg)
        s_b = cfg.noise_terms().s_b
        np.testing.assert_allclose(gains.sigma_pred, [[1.0]], atol=1e-12)
        np.testing.assert_allclose(gains.gains["L"], [[1.0 / (2.0 + s_b)]], atol=1e-12)

    def test_strategy_ii_is_one_update_then_pure_prediction(self, two_state_plant):
        cfg = strategy("II", 3, 2.0)
        gains = steady_state(two_state_plant, cfg)
        A, Q = two_state_plant.A, two_state_plant.Q
        sigma = gains.sigma_pred
        updated = A @ filtered_covariance(two_state_plant, sigma, gains.noise.s_2b) @ A.T + Q
        np.testing.assert_allclose(A @ updated @ A.T + Q, sigma, rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("kind, r", STRATEGIES)
    def test_covariance_grows_with_the_bound(self, scalar_plant, kind, r):
        previous = 0.0
        for zeta in [1.0, 3.0, 6.0, 12.0, 24.0, 48.0]:
            sigma = steady_state(scalar_plant, strategy(kind, 2, zeta, r=r)).sigma_pred[0, 0]
            assert sigma >= previous
            previous = sigma

    @pytest.mark.parametrize("kind, r", STRATEGIES)
    def test_filtered_below_predicted(self, two_state_plant, kind, r):
        gains = steady_state(two_state_plant, strategy(kind, 3, 2.0, r=r))
        assert psd_leq(gains.sigma_filt_even, gains.sigma_pred)
        assert psd_leq(gains.sigma_filt_odd, gains.sigma_pred)

    def test_strategy_ii_odd_below_even(self, two_state_plant):
        gains = steady_state(two_state_plant, strategy("II", 3, 2.0))
        assert psd_leq(gains.sigma_filt_odd, gains.sigma_filt_even)

    def test_strategy_iii_keeps_both_readings(self, scalar_plant):
        cfg = strategy("III", 3, 5.0, r=1)
        gains = steady_state(scalar_plant, cfg)
        noise = cfg.noise_terms()
        assert set(gains.gains) == {"L_even", "L_odd1", "L_odd2"}
        np.testing.assert_allclose(gains.gains["L_even"], kalman_gain(scalar_plant, gains.sigma_pred, noise.s_b))
        np.testing.assert_allclose(
            gains.extras["sigma_filt_even_coarse"], filtered_covariance(scalar_plant, gains.sigma_pred, noise.s_b)
        )
        assert psd_leq(gains.sigma_filt_even, gains.extras["sigma_filt_even_coarse"])

        state = FilterState(x_pred=np.zeros(1), sigma_pred=gains.sigma_pred)
        state = kf_step_III(state, _reading(0, 0.0), scalar_plant, np.zeros((1, 1)), *_iii(noise))
        state = kf_step_III(state, _reading(1, 0.0, p_prime=0.0), scalar_plant, np.zeros((1, 1)), *_iii(noise))
        np.testing.assert_allclose(state.sigma_prime, gains.extras["sigma_prime"], rtol=1e-12)
        np.testing.assert_allclose(
            gains.extras["L_odd2_prime"], kalman_gain(scalar_plant, gains.extras["sigma_prime"], noise.s_b_minus_r)
        )


def _iii(noise):
    return noise.s_b, noise.s_b_plus_r, noise.s_b_minus_r


@pytest.mark.parametrize("kind", ["I", "II"])
def test_estimator_matches_time_varying_filter_at_steady_state(scalar_plant, kind):
    cfg = strategy(kind, 3, 5.68)
    noise = cfg.noise_terms()
    K = lqr_gain(scalar_plant, CostWeights(1, 1)).K
    gains = steady_state(scalar_plant, cfg)
    readings = np.random.default_rng(0).normal(0.0, 3.0, 30)

    estimator = SteadyStateEstimator(scalar_plant, K, gains, runs=1)
    state = FilterState(x_pred=np.zeros(1), sigma_pred=gains.sigma_pred)
    for t, p in enumerate(readings):
        reading = _reading(t, [p])
        x_hat = estimator.update(reading)
        if kind == "I":
            state = kf_step_I(state, reading.p, scalar_plant, K, noise.s_b)
        else:
            state = kf_step_II(state, reading, scalar_plant, K, noise.s_b, noise.s_2b)
        np.testing.assert_allclose(x_hat[0], state.x_filt, rtol=1e-9, atol=1e-12)


def test_estimator_rejects_odd_reading_first(scalar_plant):
    gains = steady_state(scalar_plant, strategy("II", 3, 5.0))
    estimator = SteadyStateEstimator(scalar_plant, np.zeros((1, 1)), gains, runs=2)
    with pytest.raises(ParityError):
        estimator.update(_reading(1, np.zeros(2)))
