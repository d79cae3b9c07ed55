import glob
import os

import pytest

from config.settings import SCENARIO_DIR
from src.core.exceptions import ScenarioParseError, ScenarioValidationError
from src.scenario.scenario_model import (list_scenarios, load_scenario, resolve_scenario_path,
                                         save_scenario, scenario_from_dict)
from tests.conftest import straight_scenario, write_yaml


def test_bundled_tjunction_loads():
    scenario = load_scenario(resolve_scenario_path('tjunction_01'))
    assert scenario.id == 'tjunction_01'
    assert scenario.cluster_tag == 'tjunction'
    assert scenario.n_steps == 30
    assert scenario.reference.v_ref == 10.0
    for obj in scenario.objects:
        assert len(obj.poses) == scenario.n_steps + 1


def test_bundled_corpus_is_valid():
    paths = sorted(glob.glob(os.path.join(SCENARIO_DIR, '*.yaml')))
    assert len(paths) >= 20
    clusters = {load_scenario(p).cluster_tag for p in paths}
    assert clusters == {'tjunction', 'zip', 'highway'}


def test_lambda_g_defaults_to_chord_length(scenario_data):
    scenario = scenario_from_dict(scenario_data)
    assert scenario.reference.lambda_0 == 0.0
    assert scenario.reference.lambda_g == pytest.approx(120.0)


def test_wrong_track_length_names_object(scenario_data):
    scenario_data['objects'][0]['poses'].pop()
    with pytest.raises(ScenarioValidationError, match='object_id 1') as err:
        scenario_from_dict(scenario_data)
    assert err.value.field == 'objects[0].poses'


def test_track_error_uses_list_position():
    data = straight_scenario(objects=[(20.0, 0.0, 0.0, 5.0), (40.0, 0.0, 0.0, 5.0)])
    data['objects'][1]['poses'].pop()
    with pytest.raises(ScenarioValidationError, match='object_id 2') as err:
        scenario_from_dict(data)
    assert err.value.field == 'objects[1].poses'


def test_negative_object_speed_rejected(scenario_data):
    scenario_data['objects'][0]['poses'][3][3] = -1.0
    with pytest.raises(ScenarioValidationError, match='v < 0'):
        scenario_from_dict(scenario_data)


def test_negative_ego_speed_rejected(scenario_data):
    scenario_data['ego']['init']['v'] = -0.5
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(scenario_data)
    assert err.value.field == 'ego.init.v'


def test_duplicate_waypoints_rejected(scenario_data):
    wp = scenario_data['reference']['waypoints']
    wp.insert(3, list(wp[2]))
    with pytest.raises(ScenarioValidationError, match='duplicados'):
        scenario_from_dict(scenario_data)


def test_object_ids_must_be_contiguous():
    data = straight_scenario(objects=[(20.0, 0.0, 0.0, 5.0), (40.0, 0.0, 0.0, 5.0)])
    data['objects'][1]['id'] = 3
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(data)
    assert err.value.field == 'objects.id'


@pytest.mark.parametrize('key, value, field', [
    ('dt', 0.0, 'dt'),
    ('n_steps', 0, 'n_steps'),
    ('format_version', 2, 'format_version'),
    ('format_version', True, 'format_version'),
    ('format_version', 1.0, 'format_version'),
    ('format_version', '1', 'format_version'),
])
def test_invalid_header_values(scenario_data, key, value, field):
    scenario_data[key] = value
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(scenario_data)
    assert err.value.field == field


def test_lambda_bounds_must_be_ordered(scenario_data):
    scenario_data['reference']['lambda_0'] = 50.0
    scenario_data['reference']['lambda_g'] = 10.0
    with pytest.raises(ScenarioValidationError):
        scenario_from_dict(scenario_data)


def test_invalid_footprint_rejected(scenario_data):
    scenario_data['ego']['footprint']['radius'] = 0.0
    with pytest.raises(ScenarioValidationError):
        scenario_from_dict(scenario_data)


def test_missing_field_is_parse_error(scenario_data):
    del scenario_data['reference']
    with pytest.raises(ScenarioParseError, match='reference'):
        scenario_from_dict(scenario_data)


def test_malformed_yaml_is_parse_error(tmp_path):
    path = tmp_path / 'bad.yaml'
    path.write_text('id: [unclosed\n', encoding='utf-8')
    with pytest.raises(ScenarioParseError):
        load_scenario(str(path))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario('/nonexistent/scenario.yaml')
    with pytest.raises(FileNotFoundError):
        resolve_scenario_path('no_such_scenario')


def test_save_and_reload_is_exact(tmp_path, scenario_data):
    original = scenario_from_dict(scenario_data)
    path = str(tmp_path / 'copy.yaml')
    save_scenario(original, path)
    assert load_scenario(path) == original


def test_list_scenarios_expands_globs_and_names(tmp_path):
    first = write_yaml(tmp_path / 'a.yaml', straight_scenario('a'))
    second = write_yaml(tmp_path / 'b.yaml', straight_scenario('b'))
    paths = list_scenarios([str(tmp_path / '*.yaml'), first])
    assert paths == [first, second]
    assert list_scenarios(['zip_01']) == [resolve_scenario_path('zip_01')]
