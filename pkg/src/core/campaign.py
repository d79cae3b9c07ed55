"""
Campañas de simulación sobre la rejilla perspectiva x nivel de incertidumbre
Ejecución concurrente de escenarios, escritura de trazas e informe agregado
"""

import copy
import glob
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from config.loader import default_config
from src.core.exceptions import AggregationError, ConfigError
from src.core.feedback_loop import RunConfig, run_scenario
from src.core.metrics import EGOISTIC, NOT_APPLICABLE, ClusterReport, RiskTrace, aggregate_cluster
from src.scenario.scenario_model import list_scenarios, load_scenario

logger = logging.getLogger(__name__)

TRACE_FILE = 'trace.csv'
META_FILE = 'runmeta.json'
REPORT_FILE = 'report.json'
FAILURES_FILE = 'failures.json'

# Nivel con el que se registran las columnas activas de las ejecuciones egoístas
EGOISTIC_EVALUATION_LEVEL = 'moderate'


@dataclass
class CampaignSpec:
    """Escenarios, rejilla de ejecuciones, semilla y destino"""
    scenarios: List[str]
    perspectives: List[str] = field(default_factory=lambda: ['egoistic', 'altruistic', 'collective'])
    a_levels: List[str] = field(default_factory=lambda: ['low', 'moderate', 'high'])
    seed: int = 0
    out: str = 'runs'
    jobs: int = 1
    config: Dict = field(default_factory=default_config)

    @classmethod
    def from_config(cls, config: Optional[Dict] = None, **overrides) -> 'CampaignSpec':
        """
        Construye la campaña desde la sección campaign; los argumentos no
        nulos ganan sobre el archivo
        """
        config = config or default_config()
        values = dict(config['campaign'])
        values.update({k: v for k, v in overrides.items() if v is not None})
        spec = cls(
            scenarios=list(values['scenarios']),
            perspectives=list(values['perspectives']),
            a_levels=list(values['a_levels']),
            seed=int(values['seed']),
            out=str(values['out']),
            jobs=int(values['jobs']),
            config=config,
        )
        spec.validate()
        return spec

    def validate(self):
        known = {'egoistic', 'altruistic', 'collective'}
        unknown = [p for p in self.perspectives if p not in known]
        if unknown:
            raise ConfigError(f"Perspectivas desconocidas: {unknown}")
        missing = [lv for lv in self.a_levels if lv not in self.config['a_levels']]
        if missing:
            raise ConfigError(f"Niveles de incertidumbre desconocidos: {missing}")
        if self.jobs < 1:
            raise ConfigError(f"jobs debe ser >= 1, recibido {self.jobs}")

    def grid(self) -> List[Tuple[str, str]]:
        """
        Pares (perspectiva, nivel) a ejecutar por escenario

        La perspectiva egoísta se ejecuta una sola vez por escenario.
        """
        runs = []
        for perspective in self.perspectives:
            if perspective == EGOISTIC:
                runs.append((perspective, NOT_APPLICABLE))
            else:
                runs.extend((perspective, level) for level in self.a_levels)
        return runs


@dataclass(frozen=True)
class RunJob:
    """Una ejecución de la campaña"""
    scenario_path: str
    perspective: str
    a_level: str
    seed: int

    @property
    def evaluation_level(self) -> str:
        return EGOISTIC_EVALUATION_LEVEL if self.a_level == NOT_APPLICABLE else self.a_level

    @property
    def run_id(self) -> str:
        """<escenario>/<perspectiva>-<nivel>, con el nombre del archivo de escenario"""
        stem = os.path.splitext(os.path.basename(self.scenario_path))[0]
        return f'{stem}/{self.perspective}-{self.a_level}'


def build_jobs(spec: CampaignSpec) -> List[RunJob]:
    """Trabajos ordenados por escenario y perspectiva"""
    paths = list_scenarios(spec.scenarios)
    if not paths:
        raise FileNotFoundError(f"Ningún escenario coincide con {spec.scenarios}")
    return [RunJob(path, perspective, level, spec.seed)
            for path in paths for perspective, level in spec.grid()]


def run_dir(out: str, scenario_id: str, perspective: str, a_level: str) -> str:
    """Directorio de una ejecución: <out>/<escenario>/<perspectiva>-<nivel>"""
    return os.path.join(out, scenario_id, f'{perspective}-{a_level}')


def execute_job(job: RunJob, config: Dict) -> Tuple[RunJob, RiskTrace]:
    """Ejecuta un trabajo (en un proceso del pool)"""
    scenario = load_scenario(job.scenario_path)
    run_config = RunConfig.from_config(config, perspective=job.perspective,
                                       a_level=job.evaluation_level, seed=job.seed)
    return job, run_scenario(scenario, run_config)


def run_metadata(trace: RiskTrace, config: Dict, scenario_path: str) -> Dict:
    """Contenido de runmeta.json: identificación y configuración resuelta"""
    return {
        'scenario_id': trace.scenario_id,
        'scenario_path': scenario_path,
        'cluster_tag': trace.cluster_tag,
        'perspective': trace.perspective,
        'a_level': trace.a_level,
        'a_influential': trace.perspective != EGOISTIC,
        'evaluation_level': trace.evaluation_level,
        'levels': list(trace.levels),
        'seed': trace.seed,
        'n_steps': len(trace),
        'config': config,
    }


def write_run(out: str, trace: RiskTrace, config: Dict, scenario_path: str) -> str:
    """
    Escribe trace.csv y runmeta.json de una ejecución

    Returns:
        Directorio de la ejecución
    """
    directory = run_dir(out, trace.scenario_id, trace.perspective, trace.a_level)
    os.makedirs(directory, exist_ok=True)
    trace.to_csv(os.path.join(directory, TRACE_FILE))
    with open(os.path.join(directory, META_FILE), 'w', encoding='utf-8') as f:
        json.dump(run_metadata(trace, config, scenario_path), f, indent=2, default=list)
    logger.info(f"Traza escrita en {directory}")
    return directory


def iter_runs(out: str) -> Iterator[str]:
    """Directorios con trace.csv y runmeta.json, en orden"""
    pattern = os.path.join(out, '*', '*', TRACE_FILE)
    for trace_path in sorted(glob.glob(pattern)):
        directory = os.path.dirname(trace_path)
        if os.path.isfile(os.path.join(directory, META_FILE)):
            yield directory


def read_traces(out: str) -> List[RiskTrace]:
    """Lee todas las trazas de un directorio de salida"""
    traces = []
    for directory in iter_runs(out):
        with open(os.path.join(directory, META_FILE), 'r', encoding='utf-8') as f:
            meta = json.load(f)
        traces.append(RiskTrace.from_csv(os.path.join(directory, TRACE_FILE), meta))
    return traces


def write_failures(out: str, failed: List[str]) -> str:
    """Escribe la lista (ordenada) de ejecuciones fallidas de la campaña"""
    path = os.path.join(out, FAILURES_FILE)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(sorted(failed), f, indent=2)
    return path


def read_failures(out: str) -> List[str]:
    path = os.path.join(out, FAILURES_FILE)
    if not os.path.isfile(path):
        return []
    with open(path, 'r', encoding='utf-8') as f:
        return list(json.load(f))


def write_report(out: str, report: ClusterReport) -> str:
    path = os.path.join(out, REPORT_FILE)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report.to_dict(), f, indent=2)
    logger.info(f"Informe escrito en {path}")
    return path


def build_report(out: str, histogram_bins: Optional[int] = None) -> ClusterReport:
    """
    Reagrega las trazas existentes y escribe report.json

    Las ejecuciones fallidas registradas en failures.json se copian al
    informe.

    Raises:
        AggregationError: si no hay trazas en out
    """
    traces = read_traces(out)
    if not traces:
        raise AggregationError(f"no traces found in {out}")
    report = aggregate_cluster(traces, histogram_bins)
    report.failed_runs = read_failures(out)
    write_report(out, report)
    return report


def run_campaign(spec: CampaignSpec) -> ClusterReport:
    """
    Ejecuta la campaña completa

    Los trabajos se reparten en un pool de procesos; sólo el proceso
    principal escribe archivos. Un trabajo que falla se registra y la
    campaña continúa con el resto.
    Los fallos se guardan en failures.json y en report.failed_runs.

    Returns:
        ClusterReport calculado sobre las trazas escritas
    """
    jobs = build_jobs(spec)
    config = copy.deepcopy(spec.config)
    logger.info(f"Campaña: {len(jobs)} ejecuciones, {spec.jobs} procesos, salida {spec.out}")
    os.makedirs(spec.out, exist_ok=True)

    failed: List[str] = []
    done = 0
    if spec.jobs == 1:
        results = (_safe_execute(job, config) for job in jobs)
        for job, trace in results:
            done += 1
            _collect(spec, job, trace, config, done, len(jobs), failed)
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(_safe_execute, job, config) for job in jobs]
            for future in as_completed(futures):
                job, trace = future.result()
                done += 1
                _collect(spec, job, trace, config, done, len(jobs), failed)

    write_failures(spec.out, failed)
    if failed:
        logger.warning(f"{len(failed)} ejecuciones fallidas de {len(jobs)}: {', '.join(sorted(failed))}")
    return build_report(spec.out, config['campaign'].get('histogram_bins'))


def _safe_execute(job: RunJob, config: Dict) -> Tuple[RunJob, Optional[RiskTrace]]:
    try:
        return execute_job(job, config)
    except Exception as e:
        logging.getLogger(__name__).error(f"Error en {job.scenario_path} "
                                          f"({job.perspective}-{job.a_level}): {e}", exc_info=True)
        return job, None


def _collect(spec: CampaignSpec, job: RunJob, trace: Optional[RiskTrace], config: Dict,
             done: int, total: int, failed: List[str]):
    """Escribe el resultado de un trabajo o anota su fallo"""
    if trace is None:
        failed.append(job.run_id)
        return
    write_run(spec.out, trace, config, job.scenario_path)
    logger.info(f"[{done}/{total}] {trace.scenario_id} {job.perspective}-{job.a_level}")
