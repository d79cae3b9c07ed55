"""
Modelo de escenario: tipos, carga, validación y escritura
Formato YAML versionado, unidades SI (ver docs/scenario_format.md)
"""

import glob
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from config.settings import SCENARIO_CONFIG, SCENARIO_DIR
from src.core.exceptions import (ContractViolation, CurveFitError,
                                 ScenarioParseError, ScenarioValidationError)
from src.geometry.collision_geometry import CircleCovering
from src.prediction.motion_prediction import KinematicState
from src.scenario.curves import PolynomialCurve, chord_length, fit_cubic

logger = logging.getLogger(__name__)

Pose = Tuple[float, float, float, float]


@dataclass(frozen=True)
class ObjectTrack:
    """Pista reproducida de un objeto: n_steps + 1 poses (x, y, theta, v)"""
    object_id: int
    poses: Tuple[Pose, ...]
    footprint: CircleCovering

    def pose_at(self, k: int) -> Pose:
        return self.poses[k]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.poses, dtype=float)


@dataclass(frozen=True)
class ReferenceSpec:
    """Trayectoria de referencia y sus límites de parámetro"""
    waypoints: Tuple[Tuple[float, float], ...]
    v_ref: float
    lambda_0: float
    lambda_g: float
    curve: PolynomialCurve = field(compare=False, repr=False)


@dataclass(frozen=True)
class BoundaryCurve:
    """Contorno de carretera (no cruzable) o marca de carril (cruzable)"""
    points: Tuple[Tuple[float, float], ...]
    kind: str
    curve: PolynomialCurve = field(compare=False, repr=False)


@dataclass(frozen=True)
class Scenario:
    """Escenario completo, inmutable tras la carga"""
    id: str
    dt: float
    n_steps: int
    ego_init: KinematicState
    ego_footprint: CircleCovering
    objects: Tuple[ObjectTrack, ...]
    reference: ReferenceSpec
    roads: Tuple[BoundaryCurve, ...]
    lanes: Tuple[BoundaryCurve, ...]
    cluster_tag: str
    format_version: int = 1

    @property
    def n_objects(self) -> int:
        return len(self.objects)


def resolve_scenario_path(name: str, scenario_dir: Optional[str] = None) -> str:
    """
    Convierte un nombre de escenario en una ruta de archivo

    Una ruta existente se devuelve tal cual; un nombre sin extensión se
    busca en el corpus incluido.
    """
    if os.path.isfile(name):
        return name
    base = scenario_dir or SCENARIO_DIR
    for ext in SCENARIO_CONFIG['file_extensions']:
        candidate = os.path.join(base, name + ext)
        if os.path.isfile(candidate):
            return candidate
    raise FileNotFoundError(f"Escenario no encontrado: {name}")


def _require(data: Dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(data, dict) or key not in data:
        raise ScenarioParseError(f"Falta el campo '{key}' en {where}")
    return data[key]


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool):
        raise ScenarioParseError(f"'{name}' debe ser numérico")
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ScenarioParseError(f"'{name}' debe ser numérico, recibido {value!r}") from e


def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioParseError(f"'{name}' debe ser entero, recibido {value!r}")
    return value


def _points(raw: Any, name: str, width: int) -> Tuple[Tuple[float, ...], ...]:
    if not isinstance(raw, list):
        raise ScenarioParseError(f"'{name}' debe ser una lista")
    out = []
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != width:
            raise ScenarioParseError(f"'{name}[{i}]' debe tener {width} valores")
        out.append(tuple(_as_float(v, f"{name}[{i}]") for v in row))
    return tuple(out)


def _covering(raw: Any, name: str) -> CircleCovering:
    radius = _as_float(_require(raw, 'radius', name), f"{name}.radius")
    spacing = _as_float(raw.get('spacing', 0.0), f"{name}.spacing")
    count = _as_int(raw.get('count', 1), f"{name}.count")
    try:
        return CircleCovering(radius=radius, spacing=spacing, count=count)
    except ContractViolation as e:
        raise ScenarioValidationError(f"{name}: {e}", field=name) from e


def _fit(points: Sequence[Tuple[float, float]], name: str) -> PolynomialCurve:
    if len(points) < 4:
        raise ScenarioValidationError(f"{name} necesita al menos 4 puntos, tiene {len(points)}",
                                      field=name)
    try:
        return fit_cubic(points)
    except CurveFitError as e:
        raise ScenarioValidationError(f"{name}: {e}", field=name) from e


def _boundaries(raw: Any, kind: str) -> Tuple[BoundaryCurve, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ScenarioParseError(f"'{kind}s' debe ser una lista")
    curves = []
    for i, entry in enumerate(raw):
        name = f"{kind}s[{i}]"
        pts = _points(_require(entry, 'points', name), f"{name}.points", 2)
        curves.append(BoundaryCurve(points=pts, kind=kind, curve=_fit(pts, f"{name}.points")))
    return tuple(curves)


def scenario_from_dict(data: Dict[str, Any], source: str = '<dict>') -> Scenario:
    """
    Construye y valida un escenario a partir de su representación en mapeo

    Args:
        data: Contenido del archivo ya parseado
        source: Nombre del origen para los mensajes de error

    Returns:
        Scenario que cumple todos los invariantes
    """
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{source}: el documento debe ser un mapeo")

    version = _require(data, 'format_version', source)
    # bool es subclase de int: true no es una versión
    if type(version) is not int or version not in SCENARIO_CONFIG['supported_versions']:
        raise ScenarioValidationError(f"{source}: format_version {version!r} no soportada",
                                      field='format_version')

    scenario_id = str(_require(data, 'id', source))
    cluster_tag = str(_require(data, 'cluster_tag', source))
    dt = _as_float(_require(data, 'dt', source), 'dt')
    if not dt > 0.0:
        raise ScenarioValidationError(f"dt debe ser > 0, recibido {dt}", field='dt')
    n_steps = _as_int(_require(data, 'n_steps', source), 'n_steps')
    if n_steps < 1:
        raise ScenarioValidationError(f"n_steps debe ser >= 1, recibido {n_steps}", field='n_steps')

    # Ego
    ego = _require(data, 'ego', source)
    init = _require(ego, 'init', 'ego')
    ego_state = {key: _as_float(_require(init, key, 'ego.init'), f"ego.init.{key}")
                 for key in ('x', 'y', 'theta', 'v')}
    if ego_state['v'] < 0.0:
        raise ScenarioValidationError(f"ego.init.v debe ser >= 0, recibido {ego_state['v']}",
                                      field='ego.init.v')
    ego_init = KinematicState(**ego_state)
    ego_footprint = _covering(_require(ego, 'footprint', 'ego'), 'ego.footprint')

    # Referencia
    ref = _require(data, 'reference', source)
    waypoints = _points(_require(ref, 'waypoints', 'reference'), 'reference.waypoints', 2)
    wp = np.asarray(waypoints, dtype=float)
    if len(wp) >= 2:
        steps = np.hypot(np.diff(wp[:, 0]), np.diff(wp[:, 1]))
        dup = np.nonzero(steps <= SCENARIO_CONFIG['duplicate_tolerance'])[0]
        if dup.size:
            raise ScenarioValidationError(
                f"reference.waypoints tiene puntos consecutivos duplicados en el índice {int(dup[0]) + 1}",
                field='reference.waypoints')
    curve = _fit(waypoints, 'reference.waypoints')
    v_ref = _as_float(_require(ref, 'v_ref', 'reference'), 'reference.v_ref')
    if not v_ref > 0.0:
        raise ScenarioValidationError(f"reference.v_ref debe ser > 0, recibido {v_ref}",
                                      field='reference.v_ref')
    total = float(chord_length(wp)[-1])
    lambda_0 = _as_float(ref.get('lambda_0', 0.0), 'reference.lambda_0')
    lambda_g = _as_float(ref.get('lambda_g', total), 'reference.lambda_g')
    if not lambda_0 < lambda_g:
        raise ScenarioValidationError(f"Se requiere lambda_0 < lambda_g: {lambda_0} >= {lambda_g}",
                                      field='reference.lambda_0')
    reference = ReferenceSpec(waypoints=waypoints, v_ref=v_ref, lambda_0=lambda_0,
                              lambda_g=lambda_g, curve=curve)

    # Objetos
    raw_objects = data.get('objects') or []
    if not isinstance(raw_objects, list):
        raise ScenarioParseError("'objects' debe ser una lista")
    objects = []
    for i, entry in enumerate(raw_objects):
        name = f"objects[{i}]"
        object_id = _as_int(_require(entry, 'id', name), f"{name}.id")
        poses = _points(_require(entry, 'poses', name), f"{name}.poses", 4)
        if len(poses) != n_steps + 1:
            raise ScenarioValidationError(
                f"object_id {object_id}: la pista tiene {len(poses)} poses, se esperaban {n_steps + 1}",
                field=f"{name}.poses")
        negative = [n for n, pose in enumerate(poses) if pose[3] < 0.0]
        if negative:
            raise ScenarioValidationError(
                f"object_id {object_id}: v < 0 en el paso {negative[0]}",
                field=f"{name}.poses")
        footprint = _covering(_require(entry, 'footprint', name), f"{name}.footprint")
        objects.append(ObjectTrack(object_id=object_id, poses=poses, footprint=footprint))

    ids = sorted(o.object_id for o in objects)
    if ids != list(range(1, len(objects) + 1)):
        raise ScenarioValidationError(f"Los object_id deben ser 1..{len(objects)}, recibidos {ids}",
                                      field='objects.id')

    scenario = Scenario(
        id=scenario_id,
        dt=dt,
        n_steps=n_steps,
        ego_init=ego_init,
        ego_footprint=ego_footprint,
        objects=tuple(sorted(objects, key=lambda o: o.object_id)),
        reference=reference,
        roads=_boundaries(data.get('roads'), 'road'),
        lanes=_boundaries(data.get('lanes'), 'lane'),
        cluster_tag=cluster_tag,
        format_version=version,
    )
    return scenario


def load_scenario(path: str) -> Scenario:
    """
    Carga y valida un archivo de escenario

    Args:
        path: Ruta del archivo YAML

    Returns:
        Scenario validado
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Escenario no encontrado: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"{path}: YAML mal formado: {e}") from e

    scenario = scenario_from_dict(data, source=path)
    logger.debug(f"Escenario {scenario.id} cargado: {scenario.n_objects} objetos, "
                 f"{scenario.n_steps} pasos")
    return scenario


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Representación en mapeo del escenario (inversa de scenario_from_dict)"""
    ref = scenario.reference
    init = scenario.ego_init
    return {
        'format_version': scenario.format_version,
        'id': scenario.id,
        'cluster_tag': scenario.cluster_tag,
        'dt': scenario.dt,
        'n_steps': scenario.n_steps,
        'ego': {
            'init': {'x': init.x, 'y': init.y, 'theta': init.theta, 'v': init.v},
            'footprint': scenario.ego_footprint.to_dict(),
        },
        'reference': {
            'v_ref': ref.v_ref,
            'lambda_0': ref.lambda_0,
            'lambda_g': ref.lambda_g,
            'waypoints': [list(p) for p in ref.waypoints],
        },
        'roads': [{'points': [list(p) for p in b.points]} for b in scenario.roads],
        'lanes': [{'points': [list(p) for p in b.points]} for b in scenario.lanes],
        'objects': [
            {
                'id': obj.object_id,
                'footprint': obj.footprint.to_dict(),
                'poses': [list(p) for p in obj.poses],
            }
            for obj in scenario.objects
        ],
    }


def save_scenario(scenario: Scenario, path: str):
    """
    Escribe el escenario en el formato documentado

    Los reales se escriben con repr, por lo que la relectura es exacta.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(scenario_to_dict(scenario), f, sort_keys=False, default_flow_style=None)
    logger.info(f"Escenario {scenario.id} guardado en {path}")


def list_scenarios(patterns: List[str]) -> List[str]:
    """Expande rutas, globs y nombres del corpus a rutas ordenadas sin duplicados"""
    paths = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern))
        if matches:
            paths.extend(matches)
        else:
            paths.append(resolve_scenario_path(pattern))
    seen = set()
    unique = []
    for p in paths:
        key = os.path.abspath(p)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    return unique
