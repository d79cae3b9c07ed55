"""
Trazas de riesgo, métricas de comportamiento y agregación por clusters
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import A_LEVELS, CAMPAIGN_CONFIG
from src.core.exceptions import AggregationError, ContractViolation

logger = logging.getLogger(__name__)

EGOISTIC = 'egoistic'
NOT_APPLICABLE = 'na'
COST_NAMES = ('J_r', 'J_e', 'J_a', 'J_c')

# Columnas fijas de la traza, en orden
BASE_COLUMNS = ['k', 't', 'x', 'y', 'theta', 'v', 'lambda',
                'J_r', 'J_e', 'J_a', 'J_c']
TAIL_COLUMNS = ['ref_error', 'min_object_distance', 'collision']


def level_columns(levels: Iterable[str]) -> List[str]:
    """Columnas J_a_<nivel> y J_c_<nivel>"""
    levels = list(levels)
    return [f'J_a_{lv}' for lv in levels] + [f'J_c_{lv}' for lv in levels]


def object_columns(object_ids: Iterable[int]) -> List[str]:
    """Columnas de riesgo por objeto en n = k"""
    ids = list(object_ids)
    return [f'R_eo_{i}' for i in ids] + [f'R_oe_{i}' for i in ids]


def trace_columns(levels: Iterable[str], object_ids: Iterable[int]) -> List[str]:
    return BASE_COLUMNS + level_columns(levels) + object_columns(object_ids) + TAIL_COLUMNS


@dataclass
class RiskTrace:
    """
    Traza de una ejecución: una fila por paso k

    a_level es 'na' en ejecuciones egoístas; sus columnas activas J_a/J_c
    corresponden a evaluation_level.
    """
    scenario_id: str
    cluster_tag: str
    perspective: str
    a_level: str
    seed: int
    frame: pd.DataFrame
    levels: Tuple[str, ...] = tuple(A_LEVELS)
    evaluation_level: str = 'moderate'

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def object_ids(self) -> List[int]:
        return [int(c[len('R_eo_'):]) for c in self.frame.columns if c.startswith('R_eo_')]

    def cost_series(self, cost: str, level: Optional[str] = None) -> np.ndarray:
        """
        Serie de un coste evaluada en un nivel de a

        J_r sigue al selector: J_e (egoísta), J_a (altruista) o J_c (colectivo).
        """
        level = level or self.evaluation_level
        if cost == 'J_r':
            cost = {'egoistic': 'J_e', 'altruistic': 'J_a'}.get(self.perspective, 'J_c')
        if cost == 'J_e':
            return self.frame['J_e'].to_numpy(dtype=float)
        column = f'{cost}_{level}'
        if column not in self.frame:
            raise ContractViolation(f"La traza no tiene la columna {column}")
        return self.frame[column].to_numpy(dtype=float)

    def check(self):
        """Comprueba J_c = (J_e + J_a)/2 y que todas las entradas sean finitas"""
        frame = self.frame
        numeric = frame.drop(columns=['min_object_distance', 'collision'])
        if not np.all(np.isfinite(numeric.to_numpy(dtype=float))):
            raise ContractViolation(f"Traza {self.scenario_id} con valores no finitos")
        expected = (frame['J_e'] + frame['J_a']) / 2.0
        if not np.allclose(frame['J_c'], expected, rtol=1e-12, atol=0.0):
            raise ContractViolation(f"Traza {self.scenario_id}: J_c != (J_e + J_a)/2")

    def to_csv(self, path: str):
        self.frame.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: str, meta: Dict) -> 'RiskTrace':
        """Lee una traza escrita por to_csv con los metadatos de runmeta.json"""
        frame = pd.read_csv(path, float_precision='round_trip')
        frame['collision'] = frame['collision'].astype(bool)
        return cls(
            scenario_id=meta['scenario_id'],
            cluster_tag=meta['cluster_tag'],
            perspective=meta['perspective'],
            a_level=meta['a_level'],
            seed=int(meta['seed']),
            frame=frame,
            levels=tuple(meta.get('levels', A_LEVELS)),
            evaluation_level=meta.get('evaluation_level', 'moderate'),
        )


@dataclass(frozen=True)
class BehaviorMetrics:
    acc_ref_error: float
    max_ref_error: float
    traveled_distance: float
    avg_min_object_distance: float


def behavior_metrics(trace: RiskTrace) -> BehaviorMetrics:
    """
    Métricas de comportamiento de una traza

    Args:
        trace: Traza no vacía

    Returns:
        Error de referencia acumulado y máximo, distancia recorrida y distancia
        media al objeto más cercano (NaN sin objetos)
    """
    if len(trace) == 0:
        raise AggregationError(f"Traza vacía: {trace.scenario_id}")
    frame = trace.frame
    errors = frame['ref_error'].to_numpy(dtype=float)
    xy = frame[['x', 'y']].to_numpy(dtype=float)
    steps = np.hypot(*np.diff(xy, axis=0).T) if len(xy) > 1 else np.zeros(0)
    distances = frame['min_object_distance'].to_numpy(dtype=float)
    closest = float(np.nanmean(distances)) if np.any(np.isfinite(distances)) else math.nan
    return BehaviorMetrics(
        acc_ref_error=float(np.sum(errors)),
        max_ref_error=float(np.max(errors)),
        traveled_distance=float(np.sum(steps)),
        avg_min_object_distance=closest,
    )


def accumulate(series: np.ndarray) -> np.ndarray:
    """J_acc,k = sum_{i<=k} J_i"""
    return np.cumsum(np.asarray(series, dtype=float))


def hold_final(series: Sequence[np.ndarray]) -> np.ndarray:
    """Apila series de distinta longitud repitiendo su último valor"""
    length = max(len(s) for s in series)
    out = np.empty((len(series), length))
    for i, s in enumerate(series):
        out[i, :len(s)] = s
        out[i, len(s):] = s[-1]
    return out


def weighted_total(per_cluster: Dict[str, Sequence[float]]) -> float:
    """
    Media total ponderada: (1/N_tot) sum_c N_c sum_s J^{s,c}

    Args:
        per_cluster: Cluster -> valores por escenario (J_avg o J_max)
    """
    n_total = sum(len(v) for v in per_cluster.values())
    if n_total == 0:
        raise AggregationError("No hay escenarios que agregar")
    return float(sum(len(v) * math.fsum(v) for v in per_cluster.values()) / n_total)


def _nan_to_none(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def _nanmean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.nanmean(arr)) if np.any(np.isfinite(arr)) else math.nan


@dataclass
class ClusterStats:
    """Estadísticas de un cluster en un caso (perspectiva, nivel)"""
    n_scenarios: int
    series: Dict[str, List[float]]
    avg_risk: Dict[str, List[float]]
    max_risk: Dict[str, List[float]]
    behavior: Dict[str, float]
    final_collective: List[float]
    final_collective_std: float
    histogram: Dict[str, List[float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'n_scenarios': self.n_scenarios,
            'series': self.series,
            'avg_risk': self.avg_risk,
            'max_risk': self.max_risk,
            'behavior': {k: _nan_to_none(v) for k, v in self.behavior.items()},
            'final_collective': self.final_collective,
            'final_collective_std': _nan_to_none(self.final_collective_std),
            'histogram': self.histogram,
        }


@dataclass
class CaseReport:
    """Un caso (perspectiva, nivel de a) con todos sus clusters"""
    perspective: str
    a_level: str
    clusters: Dict[str, ClusterStats]
    total_weighted_average: Dict[str, float]
    total_weighted_average_max: Dict[str, float]

    @property
    def n_scenarios(self) -> int:
        return sum(c.n_scenarios for c in self.clusters.values())

    def to_dict(self) -> Dict:
        return {
            'perspective': self.perspective,
            'a_level': self.a_level,
            'n_scenarios': self.n_scenarios,
            'total_weighted_average': self.total_weighted_average,
            'total_weighted_average_max': self.total_weighted_average_max,
            'clusters': {name: stats.to_dict() for name, stats in self.clusters.items()},
        }


@dataclass
class ClusterReport:
    """Informe completo de una campaña"""
    cases: Dict[str, CaseReport]
    reallocation: Dict[str, Dict[str, Optional[float]]]
    histogram_bins: int
    failed_runs: List[str] = field(default_factory=list)

    def case(self, perspective: str, a_level: str) -> CaseReport:
        key = case_key(perspective, a_level)
        if key not in self.cases:
            raise AggregationError(f"No hay datos para el caso {key}")
        return self.cases[key]

    def to_dict(self) -> Dict:
        return {
            'histogram_bins': self.histogram_bins,
            'cases': {key: case.to_dict() for key, case in self.cases.items()},
            'reallocation': self.reallocation,
            'failed_runs': {'count': len(self.failed_runs), 'runs': list(self.failed_runs)},
        }


def case_key(perspective: str, a_level: str) -> str:
    return f'{perspective}/{a_level}'


def expand_cases(trace: RiskTrace) -> List[str]:
    """Niveles bajo los que se informa una traza (todos si es egoísta)"""
    if trace.perspective == EGOISTIC:
        return list(trace.levels)
    return [trace.evaluation_level]


def _cluster_stats(traces: List[RiskTrace], level: str) -> ClusterStats:
    series = {}
    avg_risk = {}
    max_risk = {}
    for cost in COST_NAMES:
        values = [trace.cost_series(cost, level) for trace in traces]
        series[cost] = hold_final([accumulate(v) for v in values]).mean(axis=0).tolist()
        avg_risk[cost] = [float(np.mean(v)) for v in values]
        max_risk[cost] = [float(np.max(v)) for v in values]

    behaviors = [behavior_metrics(trace) for trace in traces]
    behavior = {
        'avg_max_ref_error': float(np.mean([b.max_ref_error for b in behaviors])),
        'avg_acc_ref_error': float(np.mean([b.acc_ref_error for b in behaviors])),
        'avg_traveled_distance': float(np.mean([b.traveled_distance for b in behaviors])),
        'avg_min_object_distance': _nanmean([b.avg_min_object_distance for b in behaviors]),
    }
    final = [float(accumulate(trace.cost_series('J_c', level))[-1]) for trace in traces]
    spread = float(np.std(final, ddof=1)) if len(final) > 1 else 0.0
    return ClusterStats(n_scenarios=len(traces), series=series, avg_risk=avg_risk,
                        max_risk=max_risk, behavior=behavior, final_collective=final,
                        final_collective_std=spread)


def _percent_change(new: float, base: float) -> Optional[float]:
    if base == 0.0:
        return None
    return 100.0 * (new - base) / base


def aggregate_cluster(traces: Sequence[RiskTrace], histogram_bins: Optional[int] = None) -> ClusterReport:
    """
    Agrega las trazas de una campaña por caso y cluster

    Las ejecuciones egoístas se informan bajo todos los niveles de a con sus
    columnas por nivel. El resultado no depende del orden de las trazas.

    Args:
        traces: Trazas (una por escenario y ejecución)
        histogram_bins: Barras de los histogramas del coste colectivo final

    Returns:
        ClusterReport con series, totales ponderados, comportamiento,
        histogramas, dispersión y reasignación de riesgo
    """
    if not traces:
        raise AggregationError("No hay trazas que agregar")
    bins = histogram_bins or CAMPAIGN_CONFIG['histogram_bins']
    ordered = sorted(traces, key=lambda t: (t.cluster_tag, t.scenario_id, t.perspective, t.a_level))

    grouped: Dict[Tuple[str, str], Dict[str, List[RiskTrace]]] = {}
    for trace in ordered:
        if len(trace) == 0:
            raise AggregationError(f"Traza vacía: {trace.scenario_id}")
        for level in expand_cases(trace):
            clusters = grouped.setdefault((trace.perspective, level), {})
            clusters.setdefault(trace.cluster_tag, []).append(trace)

    cases: Dict[str, CaseReport] = {}
    for (perspective, level) in sorted(grouped):
        clusters = {name: _cluster_stats(group, level)
                    for name, group in sorted(grouped[(perspective, level)].items())}
        twa = {cost: weighted_total({c: s.avg_risk[cost] for c, s in clusters.items()})
               for cost in COST_NAMES}
        twa_max = {cost: weighted_total({c: s.max_risk[cost] for c, s in clusters.items()})
                   for cost in COST_NAMES}
        cases[case_key(perspective, level)] = CaseReport(perspective, level, clusters, twa, twa_max)

    _attach_histograms(cases, bins)
    reallocation = _reallocation(cases)
    logger.info(f"Informe agregado: {len(cases)} casos sobre {len(ordered)} trazas")
    return ClusterReport(cases=cases, reallocation=reallocation, histogram_bins=bins)


def _attach_histograms(cases: Dict[str, CaseReport], bins: int):
    """Histogramas con bordes comunes por cluster a todos los casos"""
    finals: Dict[str, List[float]] = {}
    for case in cases.values():
        for name, stats in case.clusters.items():
            finals.setdefault(name, []).extend(stats.final_collective)
    edges = {name: np.histogram_bin_edges(np.asarray(values), bins=bins)
             for name, values in finals.items()}
    for case in cases.values():
        for name, stats in case.clusters.items():
            counts, _ = np.histogram(np.asarray(stats.final_collective), bins=edges[name])
            stats.histogram = {'edges': edges[name].tolist(), 'counts': counts.tolist()}


def _reallocation(cases: Dict[str, CaseReport]) -> Dict[str, Dict[str, Optional[float]]]:
    """Cambio relativo (%) de J_e y J_a del colectivo respecto al egoísta"""
    out = {}
    for key, case in cases.items():
        if case.perspective != 'collective':
            continue
        base = cases.get(case_key(EGOISTIC, case.a_level))
        if base is None:
            continue
        out[case.a_level] = {
            'ego_percent': _percent_change(case.total_weighted_average['J_e'],
                                           base.total_weighted_average['J_e']),
            'object_percent': _percent_change(case.total_weighted_average['J_a'],
                                              base.total_weighted_average['J_a']),
        }
    return out


def gap_index(trace: RiskTrace, object_x: np.ndarray, lane_y: float,
              tolerance: float = 0.5) -> Optional[int]:
    """
    Hueco en el que se incorpora el ego en un escenario de incorporación

    Args:
        trace: Traza de la ejecución
        object_x: Posiciones x de los objetos por paso (n_pasos, N_o)
        lane_y: Coordenada y del centro del carril de destino
        tolerance: Distancia lateral para considerar la incorporación hecha

    Returns:
        Número de objetos por delante del ego al incorporarse (0 = delante de
        todos) o None si no se incorpora
    """
    y = trace.frame['y'].to_numpy(dtype=float)
    merged = np.flatnonzero(np.abs(y - lane_y) <= tolerance)
    if merged.size == 0:
        return None
    k = int(merged[0])
    x_e = float(trace.frame['x'].iloc[k])
    return int(np.sum(np.asarray(object_x)[k] > x_e))
