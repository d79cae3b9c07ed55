import pytest

from config.loader import deep_merge, default_config, load_config, resolve_config_path
from config.settings import CONFIG_ENV_VAR, PLANNER_CONFIG
from src.core.exceptions import ConfigError
from tests.conftest import write_yaml


def test_defaults_without_file(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    config = load_config()
    assert config['planner']['n_p'] == PLANNER_CONFIG['n_p']
    assert config['a_levels'] == {'low': 0.5, 'moderate': 1.0, 'high': 2.0}


def test_defaults_are_copies():
    config = default_config()
    config['planner']['n_p'] = 99
    assert PLANNER_CONFIG['n_p'] != 99


def test_deep_merge_keeps_nested_defaults():
    merged = deep_merge({'apf': {'a_road': 1.0, 'epsilon': 0.5}, 'n_p': 20},
                       {'apf': {'a_road': 0.2}})
    assert merged == {'apf': {'a_road': 0.2, 'epsilon': 0.5}, 'n_p': 20}


def test_file_overrides_section(tmp_path):
    path = write_yaml(tmp_path / 'run.yaml', {'risk': {'w_r': 0.5}, 'simulation': None})
    config = load_config(path)
    assert config['risk']['w_r'] == 0.5
    assert config['risk']['n_rho'] == default_config()['risk']['n_rho']


def test_environment_variable(tmp_path, monkeypatch):
    path = write_yaml(tmp_path / 'env.yaml', {'planner': {'n_p': 7}})
    monkeypatch.setenv(CONFIG_ENV_VAR, path)
    assert resolve_config_path() == path
    assert load_config()['planner']['n_p'] == 7
    assert resolve_config_path('explicit.yaml') == 'explicit.yaml'


@pytest.mark.parametrize('content', [
    '{unclosed: [',
    '- just\n- a list\n',
    'unknown_section: {a: 1}\n',
    'planner: 5\n',
])
def test_invalid_files(tmp_path, content):
    path = tmp_path / 'bad.yaml'
    path.write_text(content, encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'absent.yaml'))
