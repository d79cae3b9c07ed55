import numpy as np
import pytest

from src.core.exceptions import ContractViolation
from src.geometry.collision_geometry import CircleCovering
from src.planner.path_following import EgoState, replay
from src.planner.smpc_planner import (ObjectForecast, Perspective, PlanningContext, SMPCPlanner,
                                      optimize_inputs)
from src.prediction.motion_prediction import KinematicState, PredictionConfig, ego_view_from_state
from src.risk.risk_engine import RiskEngine
from src.scenario.curves import fit_cubic
from tests.conftest import fast_config

CAR = CircleCovering(radius=1.0, spacing=1.5, count=3)
REFERENCE = fit_cubic([[float(x), 0.0] for x in range(0, 121, 10)])
Q0 = EgoState(0.0, 0.0, 0.0)
U_PREV = np.array([10.0, 0.0])


def _planner(**sections):
    config = fast_config(**sections)
    prediction = PredictionConfig.from_dict(config['prediction'], config['a_levels'])
    engine = RiskEngine(config['risk'], prediction_config=prediction)
    return SMPCPlanner(config['planner'], engine, prediction)


def _context(planner, objects=((6.0, 0.0, 0.0, 5.0),)):
    cfg = planner.cfg
    forecasts = [ObjectForecast(i, CAR, ego_view_from_state(KinematicState(*obj), cfg.n_p, cfg.dt,
                                                            planner.prediction_config))
                 for i, obj in enumerate(objects, start=1)]
    return PlanningContext(reference=REFERENCE, lambda_bounds=(0.0, REFERENCE.lam_max),
                           v_ref=10.0, ego_footprint=CAR, objects=forecasts)


def _random_inputs(planner, n=16, seed=3):
    rng = np.random.default_rng(seed)
    h = planner.horizon
    return np.stack([rng.uniform(0.0, planner.cfg.v_max, (n, h)),
                     rng.uniform(-planner.cfg.dtheta_max, planner.cfg.dtheta_max, (n, h))], axis=-1)


def test_plan_shapes():
    planner = _planner()
    plan = planner.optimize(Q0, 0.0, U_PREV, _context(planner), Perspective.COLLECTIVE, 1.0)
    assert plan.inputs.shape == (planner.cfg.n_p + 1, 2)
    assert plan.states.shape == (planner.cfg.n_p + 2, 3)
    assert plan.progress.shape == (planner.cfg.n_p + 2,)


def test_optimize_is_deterministic():
    plans = []
    for _ in range(2):
        planner = _planner()
        plans.append(planner.optimize(Q0, 0.0, U_PREV, _context(planner),
                                      Perspective.COLLECTIVE, 1.0, k=3, seed=7))
    np.testing.assert_array_equal(plans[0].inputs, plans[1].inputs)
    assert plans[0].total_cost == plans[1].total_cost


def test_seed_changes_samples():
    first = _planner()
    second = _planner()
    a = first.optimize(Q0, 0.0, U_PREV, _context(first), Perspective.COLLECTIVE, 1.0, seed=1)
    b = second.optimize(Q0, 0.0, U_PREV, _context(second), Perspective.COLLECTIVE, 1.0, seed=2)
    assert not np.array_equal(a.inputs, b.inputs)


def test_inputs_stay_in_bounds():
    planner = _planner()
    plan = planner.optimize(Q0, 0.0, U_PREV, _context(planner), Perspective.ALTRUISTIC, 2.0)
    assert np.all(plan.inputs >= planner.cfg.u_lower)
    assert np.all(plan.inputs <= planner.cfg.u_upper)


def test_plan_states_replay_exactly():
    planner = _planner()
    plan = planner.optimize(Q0, 0.0, U_PREV, _context(planner), Perspective.COLLECTIVE, 1.0)
    np.testing.assert_array_equal(plan.states, replay(Q0, plan.inputs, planner.cfg.dt, planner.cfg))


def test_plan_is_no_worse_than_holding_input():
    planner = _planner()
    context = _context(planner)
    hold = np.tile(U_PREV, (1, planner.horizon, 1))
    baseline = planner.evaluate(Q0.as_array(), 0.0, U_PREV, hold, context,
                                Perspective.COLLECTIVE, 1.0)['total'][0]
    plan = planner.optimize(Q0, 0.0, U_PREV, context, Perspective.COLLECTIVE, 1.0)
    assert plan.total_cost <= baseline + 1e-9


def test_elite_costs_never_increase():
    planner = _planner(planner={'optimizer': {'n_iters': 4}})
    plan = planner.optimize(Q0, 0.0, U_PREV, _context(planner), Perspective.COLLECTIVE, 1.0)
    history = np.array(plan.elite_costs)
    assert len(history) == 4
    assert np.all(np.diff(history) <= 1e-9)


def test_collective_cost_is_mean():
    planner = _planner()
    result = planner.evaluate(Q0.as_array(), 0.0, U_PREV, _random_inputs(planner), _context(planner),
                              Perspective.COLLECTIVE, 1.0)
    np.testing.assert_array_equal(result['J_c'], (result['J_e'] + result['J_a']) / 2.0)
    np.testing.assert_array_equal(result['J_r'], result['J_c'])
    assert np.all(result['J_e'] > 0.0)


def test_altruistic_selects_object_view():
    planner = _planner()
    result = planner.evaluate(Q0.as_array(), 0.0, U_PREV, _random_inputs(planner), _context(planner),
                              Perspective.ALTRUISTIC, 1.0)
    np.testing.assert_array_equal(result['J_r'], result['J_a'])


def test_egoistic_cost_ignores_uncertainty_level():
    planner = _planner()
    context = _context(planner)
    inputs = _random_inputs(planner)
    low = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, context, Perspective.EGOISTIC, 0.5)
    high = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, context, Perspective.EGOISTIC, 2.0)
    np.testing.assert_array_equal(low['total'], high['total'])
    assert 'J_a' not in low


def test_altruistic_cost_depends_on_uncertainty_level():
    planner = _planner()
    context = _context(planner)
    inputs = _random_inputs(planner)
    low = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, context, Perspective.ALTRUISTIC, 0.5)
    high = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, context, Perspective.ALTRUISTIC, 2.0)
    assert not np.array_equal(low['J_a'], high['J_a'])


def test_objects_only_add_cost():
    planner = _planner()
    inputs = _random_inputs(planner)
    empty = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, _context(planner, objects=()),
                             Perspective.COLLECTIVE, 1.0)
    busy = planner.evaluate(Q0.as_array(), 0.0, U_PREV, inputs, _context(planner),
                            Perspective.COLLECTIVE, 1.0)
    np.testing.assert_array_equal(empty['J_r'], 0.0)
    assert np.all(busy['total'] >= empty['total'])


def test_perspective_costs_cover_all_levels():
    planner = _planner()
    context = _context(planner, objects=((6.0, 0.0, 0.0, 5.0), (20.0, 3.0, np.pi, 6.0)))
    plan = planner.optimize(Q0, 0.0, U_PREV, context, Perspective.EGOISTIC, 1.0)
    costs = planner.perspective_costs(plan, context, {'low': 0.5, 'moderate': 1.0, 'high': 2.0})
    assert costs['r_ego'].shape == (planner.horizon, 2)
    assert set(costs['levels']) == {'low', 'moderate', 'high'}
    for level in costs['levels'].values():
        assert level['J_c'] == pytest.approx((costs['J_e'] + level['J_a']) / 2.0, rel=1e-12)
    assert costs['J_e'] == pytest.approx(plan.cost['J_r'], rel=1e-12)


def test_warm_start_shifts_previous_plan():
    planner = _planner()
    context = _context(planner)
    plan = planner.optimize(Q0, 0.0, U_PREV, context, Perspective.COLLECTIVE, 1.0)
    np.testing.assert_array_equal(planner.warm_start, plan.inputs)
    shifted = planner._initial_mean(U_PREV)
    np.testing.assert_array_equal(shifted[:-1], plan.inputs[1:])
    planner.reset()
    assert planner.warm_start is None


def test_optimize_inputs_requires_positive_a():
    planner = _planner()
    with pytest.raises(ContractViolation):
        optimize_inputs(Q0, 0.0, U_PREV, _context(planner), Perspective.COLLECTIVE, 0.0,
                        planner=planner)


def test_optimize_inputs_with_shared_planner():
    planner = _planner()
    plan = optimize_inputs(Q0, 0.0, U_PREV, _context(planner), Perspective.EGOISTIC, 1.0,
                           planner=planner, k=2)
    assert plan.first_input.in_bounds(planner.cfg)
