import numpy as np
import pytest

from config.settings import PREDICTION_CONFIG
from src.core.exceptions import ConfigError, ContractViolation, HorizonError
from src.geometry.collision_geometry import CircleCovering
from src.prediction.motion_prediction import (KinematicState, PredictionConfig, PropagationMode,
                                              build_ego_view, ego_sigma_track, ego_view_from_state,
                                              map_self_reflection, predict_ctrv, propagate_moments,
                                              state_seeded_state)
from src.scenario.scenario_model import ObjectTrack

FOOTPRINT = CircleCovering(radius=1.0, spacing=1.5, count=3)


def _track(speeds, x0=0.0, dt=0.1):
    """Pista en línea recta a lo largo de x con las velocidades dadas"""
    poses = []
    x = x0
    for v in speeds:
        poses.append((x, 0.0, 0.0, float(v)))
        x += v * dt
    return ObjectTrack(object_id=1, poses=tuple(poses), footprint=FOOTPRINT)


@pytest.fixture
def cfg():
    return PredictionConfig.from_dict()


def test_straight_one_step(cfg):
    means, sigmas = predict_ctrv(KinematicState(0.0, 0.0, 0.0, 10.0), 1, 0.1, cfg)
    np.testing.assert_allclose(means[1], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sigmas[0], [0.1, 0.1])


def test_sigma_grows_linearly(cfg):
    _, sigmas = predict_ctrv(KinematicState(0.0, 0.0, 0.0, 10.0), 4, 0.1, cfg)
    np.testing.assert_allclose(sigmas[4], [0.3, 0.3])
    np.testing.assert_allclose(np.diff(sigmas[:, 0]), 0.05)


def test_sigma_is_clamped():
    config = dict(PREDICTION_CONFIG, q=(1.0, 1.0))
    cfg = PredictionConfig.from_dict(config)
    _, sigmas = predict_ctrv(KinematicState(0.0, 0.0, 0.0, 10.0), 20, 0.1, cfg)
    assert sigmas.max() == pytest.approx(cfg.sigma_max['position'])


def test_turning_mean_matches_fine_integration(cfg):
    state = KinematicState(0.0, 0.0, 0.3, 10.0, omega=0.5)
    means, _ = predict_ctrv(state, 20, 0.1, cfg)
    # Integración del uniciclo por punto medio con paso 1e-4
    h = 1e-4
    t = (np.arange(int(round(2.0 / h))) + 0.5) * h
    theta = state.theta + state.omega * t
    x = np.sum(state.v * np.cos(theta) * h)
    y = np.sum(state.v * np.sin(theta) * h)
    assert np.hypot(means[-1, 0] - x, means[-1, 1] - y) < 1e-3


def test_invalid_steps(cfg):
    with pytest.raises(ContractViolation):
        predict_ctrv(KinematicState(0.0, 0.0, 0.0, 1.0), 0, 0.1, cfg)


def test_negative_speed_state():
    with pytest.raises(ContractViolation):
        KinematicState(0.0, 0.0, 0.0, -1.0)


def test_speed_mean_is_displacement_over_dt(cfg):
    means = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
    sigmas = np.full((3, 2), 0.1)
    moments = propagate_moments(means, sigmas, 1.0, PropagationMode.CORRECTED, cfg)
    np.testing.assert_allclose(moments['mu_v'], 5.0)
    np.testing.assert_allclose(moments['mu_theta'], np.arctan2(4.0, 3.0))


def test_speed_sigma_on_axis(cfg):
    means = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    sigmas = np.full((3, 2), 0.1)
    moments = propagate_moments(means, sigmas, 1.0, PropagationMode.CORRECTED, cfg)
    np.testing.assert_allclose(moments['sigma_v'], 0.1)


def test_corrected_moments_match_sampling(cfg):
    rng = np.random.default_rng(11)
    delta = np.array([3.0, 4.0])
    sigma = np.array([0.1, 0.2])
    draws = delta + sigma * rng.standard_normal((1_000_000, 2))
    means = np.array([[0.0, 0.0], delta])
    moments = propagate_moments(means, np.tile(sigma, (2, 1)), 1.0, PropagationMode.CORRECTED, cfg)
    assert moments['sigma_v'][1] == pytest.approx(np.std(np.hypot(draws[:, 0], draws[:, 1])), rel=0.05)
    heading = np.arctan2(draws[:, 1], draws[:, 0])
    assert moments['sigma_theta'][1] == pytest.approx(np.std(heading), rel=0.05)


def test_literal_speed_sigma_is_unit(cfg):
    means = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
    sigmas = np.full((3, 2), 0.3)
    moments = propagate_moments(means, sigmas, 1.0, PropagationMode.LITERAL, cfg)
    np.testing.assert_allclose(moments['sigma_v'], 1.0)


def test_zero_displacement_holds_heading(cfg):
    means = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    sigmas = np.full((4, 2), 0.1)
    moments = propagate_moments(means, sigmas, 0.1, PropagationMode.CORRECTED, cfg)
    np.testing.assert_allclose(moments['mu_theta'], np.pi / 4)
    assert moments['sigma_theta'][2] == cfg.sigma_max['heading']
    assert moments['sigma_v'][2] == pytest.approx(1.0)


def test_moments_need_two_steps(cfg):
    with pytest.raises(ContractViolation):
        propagate_moments(np.zeros((1, 2)), np.ones((1, 2)), 0.1, cfg=cfg)


def test_stationary_object_view(cfg):
    w = ego_view_from_state(KinematicState(5.0, 2.0, 0.0, 0.0), 20, 0.1, cfg)
    assert w.horizon == 21
    np.testing.assert_allclose(w.mean[:, :2], np.tile([5.0, 2.0], (21, 1)))
    np.testing.assert_allclose(w.mean[:, 3], 0.0)
    assert np.all(np.diff(w.sigma[:, 0]) >= 0.0)
    assert w.within_bounds(cfg)


def test_constant_speed_track(cfg):
    track = _track([10.0] * 30)
    w = build_ego_view(track, 10, 20, 0.1, cfg)
    np.testing.assert_allclose(w.mean[:, 3], 10.0, atol=1e-9)
    np.testing.assert_allclose(w.mean[:, 2], 0.0, atol=1e-12)
    assert w.within_bounds(cfg)


def test_hard_braking_uses_recorded_state(cfg):
    speeds = [10.0] * 10 + [10.0 - 2 * cfg.accel_limit * 0.1 * i for i in range(1, 6)] + [0.0] * 10
    track = _track(speeds)
    k = 11
    expected = ego_view_from_state(state_seeded_state(track, k, 0.1), 20, 0.1, cfg)
    w = build_ego_view(track, k, 20, 0.1, cfg)
    np.testing.assert_array_equal(w.mean, expected.mean)
    np.testing.assert_array_equal(w.sigma, expected.sigma)


def test_horizon_error(cfg):
    track = _track([5.0] * 10)
    with pytest.raises(HorizonError):
        build_ego_view(track, 10, 5, 0.1, cfg)
    with pytest.raises(HorizonError):
        build_ego_view(track, -1, 5, 0.1, cfg)


def test_self_reflection_identity_scale(cfg):
    states = np.column_stack([np.arange(21.0), np.zeros(21), np.zeros(21)])
    v = np.full(21, 10.0)
    sigma = ego_sigma_track(states[:, :2], 0.1, cfg)
    w = map_self_reflection(states, v, sigma, 1.0, cfg)
    np.testing.assert_array_equal(w.sigma, sigma)
    np.testing.assert_array_equal(w.mean[:, 3], v)


def test_self_reflection_clamps():
    config = dict(PREDICTION_CONFIG, sigma_max={'position': 2.0, 'heading': 1.0, 'velocity': 5.0})
    cfg = PredictionConfig.from_dict(config)
    states = np.zeros((3, 3))
    sigma = np.tile([1.0, 1.0, 0.1, 0.1], (3, 1))
    w = map_self_reflection(states, np.zeros(3), sigma, 10.0, cfg)
    np.testing.assert_allclose(w.sigma[:, 0], 2.0)


def test_self_reflection_rejects_nonpositive_scale(cfg):
    with pytest.raises(ContractViolation):
        map_self_reflection(np.zeros((2, 3)), np.zeros(2), np.full((2, 4), 0.1), 0.0, cfg)


def test_a_levels_validation():
    with pytest.raises(ConfigError):
        PredictionConfig.from_dict(a_levels={'low': 0.5, 'moderate': 1.5, 'high': 2.0})
    with pytest.raises(ConfigError):
        PredictionConfig.from_dict(dict(PREDICTION_CONFIG, propagation_mode='unknown'))
    assert PredictionConfig.from_dict().a_value('high') == 2.0
