import copy

import pytest
import yaml

from config.loader import deep_merge, default_config
from src.geometry.collision_geometry import CircleCovering

# Parámetros reducidos para que el bucle cerrado sea rápido en las pruebas
FAST_OVERRIDES = {
    'planner': {
        'n_p': 5,
        'apf': {'scan_nodes': 32},
        'progress': {'scan_nodes': 128},
        'optimizer': {'n_samples': 24, 'n_elite': 6, 'n_iters': 2},
    },
    'risk': {'n_rho': 12, 'n_phi': 24},
    'campaign': {'histogram_bins': 4},
}


def fast_config(**sections):
    """Configuración completa con el planificador y la malla reducidos"""
    config = deep_merge(default_config(), FAST_OVERRIDES)
    return deep_merge(config, sections)


def straight_scenario(scenario_id='straight_01', cluster_tag='straight', n_steps=8,
                      objects=None, v=10.0, roads=True):
    """
    Escenario mínimo: carretera recta en y = 0 con el ego en el origen

    objects es una lista de (x0, y0, theta, v) a velocidad constante.
    """
    dt = 0.1
    data = {
        'format_version': 1,
        'id': scenario_id,
        'cluster_tag': cluster_tag,
        'dt': dt,
        'n_steps': n_steps,
        'ego': {
            'init': {'x': 0.0, 'y': 0.0, 'theta': 0.0, 'v': v},
            'footprint': {'radius': 1.0, 'spacing': 1.5, 'count': 3},
        },
        'reference': {
            'v_ref': v,
            'waypoints': [[float(x), 0.0] for x in range(0, 121, 10)],
        },
        'objects': [],
    }
    if roads:
        data['roads'] = [{'points': [[float(x), side] for x in range(-20, 161, 20)]}
                         for side in (3.5, -3.5)]
    for i, (x0, y0, theta, speed) in enumerate(objects or [], start=1):
        data['objects'].append({
            'id': i,
            'footprint': {'radius': 1.0, 'spacing': 1.5, 'count': 3},
            'poses': [[x0 + speed * dt * k, y0, theta, speed] for k in range(n_steps + 1)],
        })
    return data


def write_yaml(path, data):
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(data, f, sort_keys=False)
    return str(path)


@pytest.fixture
def config():
    return fast_config()


@pytest.fixture
def unit_circle():
    return CircleCovering(radius=1.0)


@pytest.fixture
def car():
    return CircleCovering(radius=1.0, spacing=1.5, count=3)


@pytest.fixture
def scenario_data():
    return copy.deepcopy(straight_scenario(objects=[(15.0, 0.0, 0.0, 8.0)]))
