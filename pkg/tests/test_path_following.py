import numpy as np
import pytest

from config.settings import PLANNER_CONFIG
from src.core.exceptions import ConfigError, ContractViolation
from src.planner.path_following import (APFParams, ControlInput, EgoState, PlannerConfig,
                                        advance_progress, apf_cost, control_cost,
                                        control_cost_sequence, init_progress, path_cost,
                                        progress_sequence, reference_error, replay, rollout,
                                        state_violations, step_dynamics)
from src.scenario.curves import fit_cubic

STRAIGHT = fit_cubic([[float(x), 0.0] for x in range(0, 101, 10)])


def _line(y, x0=-20.0, x1=120.0):
    return fit_cubic([[x, y] for x in np.linspace(x0, x1, 8)])


@pytest.fixture
def cfg():
    return PlannerConfig.from_dict()


def test_step_straight(cfg):
    q = step_dynamics(EgoState(0.0, 0.0, 0.0), ControlInput(10.0, 0.0), 0.1, cfg)
    assert (q.x, q.y, q.theta) == pytest.approx((1.0, 0.0, 0.0))


def test_step_turn_in_place():
    cfg = PlannerConfig.from_dict(dict(PLANNER_CONFIG, dtheta_max=0.5))
    q = step_dynamics(EgoState(2.0, 3.0, 0.1), ControlInput(0.0, 0.3), 0.1, cfg)
    assert (q.x, q.y) == (2.0, 3.0)
    assert q.theta == pytest.approx(0.4)


@pytest.mark.parametrize('u', [ControlInput(-0.1, 0.0), ControlInput(25.0, 0.0),
                               ControlInput(5.0, 0.2)])
def test_step_rejects_inputs_outside_bounds(cfg, u):
    with pytest.raises(ContractViolation):
        step_dynamics(EgoState(0.0, 0.0, 0.0), u, 0.1, cfg)


def test_rollout_matches_replay(cfg):
    rng = np.random.default_rng(8)
    inputs = np.column_stack([rng.uniform(0, 20, 21), rng.uniform(-0.1, 0.1, 21)])
    q0 = EgoState(1.0, -2.0, 0.3)
    batch = rollout(q0.as_array(), inputs[None], 0.1)[0]
    np.testing.assert_allclose(batch, replay(q0, inputs, 0.1, cfg), atol=1e-12)
    assert batch.shape == (22, 3)


def test_progress_advances_along_path():
    assert advance_progress(5.0, 10.0, 0.2, 0.2, 0.1, (0.0, 100.0)) == pytest.approx(6.0)


def test_progress_unchanged_when_perpendicular():
    assert advance_progress(5.0, 10.0, np.pi / 2, 0.0, 0.1, (0.0, 100.0)) == pytest.approx(5.0)


def test_progress_clamped_at_start():
    assert advance_progress(0.5, 10.0, np.pi, 0.0, 0.1, (0.0, 100.0)) == 0.0


def test_progress_sequence_on_straight_path():
    states = rollout(np.zeros(3), np.tile([10.0, 0.0], (5, 1)), 0.1)
    lam = progress_sequence(3.0, states, np.full(5, 10.0), STRAIGHT, (0.0, 100.0), 0.1)
    np.testing.assert_allclose(lam, [3.0, 4.0, 5.0, 6.0, 7.0, 8.0], atol=1e-9)


def test_init_progress_projects_onto_path():
    assert init_progress([7.0, 1.5, 0.0], STRAIGHT, (0.0, 100.0)) == pytest.approx(7.0, abs=1e-3)


def test_reference_error_on_path():
    e = reference_error(np.array([30.0, 0.0, 0.0]), 10.0, 30.0, STRAIGHT, 10.0)
    np.testing.assert_allclose(e, np.zeros(4), atol=1e-8)


def test_reference_error_lateral_offset():
    e = reference_error(np.array([30.0, 2.0, 0.0]), 10.0, 30.0, STRAIGHT, 10.0)
    np.testing.assert_allclose(e, [0.0, 2.0, 0.0, 0.0], atol=1e-8)


def test_reference_error_wraps_heading():
    e = reference_error(np.array([30.0, 0.0, 2 * np.pi]), 10.0, 30.0, STRAIGHT, 10.0)
    assert e[2] == pytest.approx(0.0, abs=1e-9)


def test_path_cost_examples():
    assert path_cost(np.zeros(4), np.eye(4)) == 0.0
    assert path_cost(np.array([1.0, 0.0, 0.0, 0.0]), np.eye(4)) == 1.0
    w = np.asarray(PLANNER_CONFIG['w'])
    rng = np.random.default_rng(1)
    assert np.all(path_cost(rng.normal(size=(100, 4)), w) > 0.0)


def test_control_cost_examples():
    assert control_cost([5.0, 0.0], [5.0, 0.0], np.eye(2)) == 0.0
    assert control_cost([6.0, 0.0], [5.0, 0.0], np.eye(2)) == 1.0
    w = np.asarray(PLANNER_CONFIG['w_ctrl'])
    assert control_cost([5.0, 0.05], [5.0, 0.0], w) == control_cost([5.0, -0.05], [5.0, 0.0], w)


def test_control_cost_sequence_uses_previous_input():
    inputs = np.array([[6.0, 0.0], [6.0, 0.0], [8.0, 0.0]])
    costs = control_cost_sequence(inputs, np.array([5.0, 0.0]), np.eye(2))
    np.testing.assert_allclose(costs, [1.0, 0.0, 4.0])


def test_apf_lane_center_is_cheaper_than_marker():
    roads = [_line(-1.75), _line(5.25)]
    lanes = [_line(1.75)]
    params = APFParams(a_road=0.2)
    center = apf_cost(np.array([40.0, 0.0]), roads, lanes, 1.0, params)
    marker = apf_cost(np.array([40.0, 1.75]), roads, lanes, 1.0, params)
    assert center < 0.01 * marker


def test_apf_vanishes_far_from_curves():
    roads = [_line(-1.75), _line(5.25)]
    lanes = [_line(1.75)]
    assert apf_cost(np.array([40.0, 1000.0]), roads, lanes, 1.0, APFParams(a_road=0.2)) < 1e-6


def test_apf_is_linear_in_weight():
    roads = [_line(-1.75)]
    lanes = [_line(1.75)]
    points = np.array([[10.0, 0.3], [50.0, 1.0]])
    single = apf_cost(points, roads, lanes, 1.0)
    np.testing.assert_array_equal(apf_cost(points, roads, lanes, 2.0), 2.0 * single)


def test_state_violations_count_steps(cfg):
    states = np.array([[0.0, 0.0, 0.0], [2.0e4, 0.0, 0.0], [0.0, -2.0e4, 0.0]])
    assert state_violations(states, cfg) == 2


@pytest.mark.parametrize('override', [
    {'v_max': -1.0},
    {'n_p': 0},
    {'w': np.eye(4) * -1.0},
    {'optimizer': {'n_samples': 8, 'n_elite': 8}},
])
def test_invalid_planner_config(override):
    with pytest.raises(ConfigError):
        PlannerConfig.from_dict(dict(PLANNER_CONFIG, **override))


def test_heading_weight_and_bounds(cfg):
    assert cfg.heading_weight == 1.0
    np.testing.assert_array_equal(cfg.u_lower, [0.0, -0.1])
    np.testing.assert_array_equal(cfg.u_upper, [20.0, 0.1])
