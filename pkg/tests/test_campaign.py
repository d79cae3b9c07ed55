import json
import os

import pytest

from src.core.campaign import (CampaignSpec, RunJob, build_jobs, build_report, read_traces,
                               run_campaign, run_dir)
from src.core.exceptions import AggregationError, ConfigError
from tests.conftest import fast_config, straight_scenario, write_yaml


@pytest.fixture
def scenario_glob(tmp_path):
    folder = tmp_path / 'scenarios'
    folder.mkdir()
    write_yaml(folder / 'straight_01.yaml',
               straight_scenario('straight_01', n_steps=6, objects=[(12.0, 0.0, 0.0, 6.0)]))
    write_yaml(folder / 'straight_02.yaml',
               straight_scenario('straight_02', n_steps=6, objects=[(30.0, 3.5, 0.0, 8.0)]))
    return str(folder / '*.yaml')


def _spec(scenarios, out, **overrides):
    return CampaignSpec.from_config(fast_config(), scenarios=scenarios, out=str(out), **overrides)


def test_grid_runs_egoistic_once():
    spec = CampaignSpec(scenarios=[])
    assert spec.grid() == [('egoistic', 'na'),
                           ('altruistic', 'low'), ('altruistic', 'moderate'), ('altruistic', 'high'),
                           ('collective', 'low'), ('collective', 'moderate'), ('collective', 'high')]


def test_egoistic_job_evaluates_at_moderate():
    assert RunJob('x.yaml', 'egoistic', 'na', 0).evaluation_level == 'moderate'
    assert RunJob('x.yaml', 'collective', 'high', 0).evaluation_level == 'high'


@pytest.mark.parametrize('overrides', [
    {'perspectives': ['selfish']},
    {'a_levels': ['extreme']},
    {'jobs': 0},
])
def test_invalid_campaign(tmp_path, overrides):
    with pytest.raises(ConfigError):
        _spec(['*.yaml'], tmp_path, **overrides)


def test_no_matching_scenarios(tmp_path):
    spec = _spec([str(tmp_path / 'nothing_here')], tmp_path)
    with pytest.raises(FileNotFoundError):
        build_jobs(spec)


def test_campaign_writes_every_run(tmp_path, scenario_glob):
    out = tmp_path / 'runs'
    report = run_campaign(_spec([scenario_glob], out))

    traces = read_traces(str(out))
    assert len(traces) == 14
    assert os.path.isfile(os.path.join(run_dir(str(out), 'straight_01', 'egoistic', 'na'), 'trace.csv'))
    assert len(report.cases) == 9
    assert report.failed_runs == []
    assert report.case('egoistic', 'high').n_scenarios == 2
    assert set(report.reallocation) == {'low', 'moderate', 'high'}

    with open(out / 'straight_01' / 'collective-low' / 'runmeta.json', encoding='utf-8') as f:
        meta = json.load(f)
    assert meta['a_influential'] is True
    assert meta['config']['planner']['n_p'] == 5

    # Reagregar desde disco reproduce el informe
    with open(out / 'report.json', encoding='utf-8') as f:
        written = json.load(f)
    rebuilt = build_report(str(out), fast_config()['campaign']['histogram_bins'])
    assert json.loads(json.dumps(rebuilt.to_dict())) == written


def test_failed_runs_do_not_stop_campaign(tmp_path, scenario_glob):
    folder = os.path.dirname(scenario_glob)
    write_yaml(os.path.join(folder, 'short.yaml'), straight_scenario('short', n_steps=2))
    out = tmp_path / 'runs'
    report = run_campaign(_spec([scenario_glob], out, perspectives=['egoistic']))
    assert sorted(t.scenario_id for t in read_traces(str(out))) == ['straight_01', 'straight_02']
    assert report.case('egoistic', 'low').n_scenarios == 2
    assert report.failed_runs == ['short/egoistic-na']

    with open(out / 'report.json', encoding='utf-8') as f:
        written = json.load(f)
    assert written['failed_runs'] == {'count': 1, 'runs': ['short/egoistic-na']}
    # El informe reagregado conserva los fallos
    assert build_report(str(out)).failed_runs == ['short/egoistic-na']


def test_report_without_traces(tmp_path):
    with pytest.raises(AggregationError, match='no traces found'):
        build_report(str(tmp_path))
