"""
Bucle cerrado de simulación de un escenario
Percepción (predicciones), decisión (SMPC), acción (primera entrada) y
evaluación (registro de riesgos y colisiones) en cada paso
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config.loader import default_config
from src.core.exceptions import ConfigError
from src.core.metrics import NOT_APPLICABLE, RiskTrace, trace_columns
from src.geometry.collision_geometry import circle_gap
from src.planner.path_following import (EgoState, PlannedTrajectory, init_progress,
                                        reference_error, step_dynamics)
from src.planner.smpc_planner import ObjectForecast, Perspective, PlanningContext, SMPCPlanner
from src.prediction.motion_prediction import PredictionConfig, build_ego_view
from src.risk.risk_engine import RiskEngine
from src.scenario.scenario_model import Scenario


@dataclass
class RunConfig:
    """
    Configuración de una ejecución

    En ejecuciones egoístas el nivel de a se registra pero no influye en el
    plan; las columnas activas J_a/J_c se evalúan en ese nivel.
    """
    perspective: Perspective = Perspective.COLLECTIVE
    a_level: str = 'moderate'
    seed: int = 0
    config: Dict = field(default_factory=default_config)

    @classmethod
    def from_config(cls, config: Optional[Dict] = None, perspective: Optional[str] = None,
                    a_level: Optional[str] = None, seed: Optional[int] = None) -> 'RunConfig':
        """
        Construye la configuración; los argumentos ganan sobre la sección simulation

        Args:
            config: Configuración por secciones (load_config)
            perspective: egoistic, altruistic o collective
            a_level: Nivel de incertidumbre (clave de a_levels)
            seed: Semilla del optimizador
        """
        config = config or default_config()
        sim = config['simulation']
        name = perspective or sim['perspective']
        try:
            selector = Perspective(name)
        except ValueError as e:
            raise ConfigError(f"Perspectiva desconocida: {name}") from e
        level = a_level or sim['a_level']
        if level not in config['a_levels']:
            raise ConfigError(f"Nivel de incertidumbre desconocido: {level}")
        return cls(perspective=selector, a_level=level,
                   seed=int(sim['seed'] if seed is None else seed), config=config)

    @property
    def a_influential(self) -> bool:
        return self.perspective is not Perspective.EGOISTIC

    @property
    def recorded_level(self) -> str:
        return self.a_level if self.a_influential else NOT_APPLICABLE


class ScenarioRunner:
    """
    Ejecuta un escenario en bucle cerrado con objetos reproducidos
    """

    def __init__(self, run_config: Optional[RunConfig] = None):
        """
        Inicializa el bucle

        Args:
            run_config: Perspectiva, nivel de a, semilla y configuración
        """
        self.logger = logging.getLogger(__name__)
        self.run_config = run_config or RunConfig()
        config = self.run_config.config

        self.prediction_config = PredictionConfig.from_dict(config['prediction'], config['a_levels'])
        self.risk = RiskEngine(config['risk'], prediction_config=self.prediction_config)
        self.planner = SMPCPlanner(config['planner'], self.risk, self.prediction_config)
        self.log_interval = int(config['simulation'].get('log_interval', 10))

        # Estado del bucle
        self.scenario: Optional[Scenario] = None
        self.q: Optional[EgoState] = None
        self.lam = 0.0
        self.u_prev = np.zeros(2)
        self.rows: List[Dict] = []
        self.collisions = 0
        self.avg_step_time = 0.0

    def initialize(self, scenario: Scenario):
        """
        Comprueba el escenario contra la configuración y prepara el estado

        Raises:
            ConfigError: horizonte mayor que el escenario o dt distinto de dT
        """
        cfg = self.planner.cfg
        if cfg.n_p > scenario.n_steps:
            raise ConfigError(f"N_P={cfg.n_p} excede la duración del escenario "
                              f"{scenario.id} ({scenario.n_steps} pasos)")
        if not math.isclose(cfg.dt, scenario.dt, rel_tol=1e-12, abs_tol=0.0):
            raise ConfigError(f"dt del escenario {scenario.id} ({scenario.dt}) distinto "
                              f"del periodo del planificador ({cfg.dt})")

        self.scenario = scenario
        init = scenario.ego_init
        self.q = EgoState(init.x, init.y, init.theta)
        self.u_prev = np.array([init.v, 0.0])
        ref = scenario.reference
        self.lam = init_progress(self.q.as_array(), ref.curve, (ref.lambda_0, ref.lambda_g),
                                 heading_weight=cfg.heading_weight, scan_nodes=cfg.progress_nodes,
                                 tolerance=cfg.progress_tolerance)
        self.rows = []
        self.collisions = 0
        self.avg_step_time = 0.0
        self.planner.reset()

    def run(self, scenario: Scenario) -> RiskTrace:
        """
        Simula el escenario durante n_steps pasos

        Returns:
            RiskTrace con una fila por paso
        """
        self.initialize(scenario)
        rc = self.run_config
        self.logger.info(f"Escenario {scenario.id}: {rc.perspective.value}, a={rc.recorded_level}, "
                         f"semilla {rc.seed}, {scenario.n_steps} pasos")

        for k in range(scenario.n_steps):
            step_start = time.time()

            # 1. PERCEPCIÓN: predicciones de los objetos
            context = self._perceive(k)

            # 2. DECISIÓN: plan SMPC
            plan = self._decide(k, context)

            # 3. EVALUACIÓN: registro en el estado realizado
            self._evaluate(k, plan, context)

            # 4. ACCIÓN: aplicar la primera entrada
            self._act(plan)

            step_time = time.time() - step_start
            self.avg_step_time += (step_time - self.avg_step_time) / (k + 1)
            if (k + 1) % self.log_interval == 0:
                self.logger.info(f"{scenario.id} paso {k + 1}/{scenario.n_steps} - "
                                 f"coste {plan.total_cost:.3f}, {step_time:.2f}s")

        self.logger.info(f"Escenario {scenario.id} terminado: {self.collisions} pasos con colisión, "
                         f"{self.avg_step_time:.2f}s por paso")
        return self._trace()

    def _perceive(self, k: int) -> PlanningContext:
        scenario = self.scenario
        cfg = self.planner.cfg
        forecasts = [ObjectForecast(track.object_id, track.footprint,
                                    build_ego_view(track, k, cfg.n_p, cfg.dt, self.prediction_config))
                     for track in scenario.objects]
        ref = scenario.reference
        return PlanningContext(
            reference=ref.curve,
            lambda_bounds=(ref.lambda_0, ref.lambda_g),
            v_ref=ref.v_ref,
            ego_footprint=scenario.ego_footprint,
            roads=scenario.roads,
            lanes=scenario.lanes,
            objects=forecasts,
        )

    def _decide(self, k: int, context: PlanningContext) -> PlannedTrajectory:
        rc = self.run_config
        a = self.prediction_config.a_value(rc.a_level)
        return self.planner.optimize(self.q, self.lam, self.u_prev, context, rc.perspective, a,
                                     k=k, seed=rc.seed)

    def _act(self, plan: PlannedTrajectory):
        u = plan.first_input
        self.q = step_dynamics(self.q, u, self.planner.cfg.dt, self.planner.cfg)
        self.lam = float(plan.progress[1])
        self.u_prev = u.as_array()

    def _evaluate(self, k: int, plan: PlannedTrajectory, context: PlanningContext):
        """Registra los tres costes, riesgos por objeto y la situación real en k"""
        scenario = self.scenario
        rc = self.run_config
        levels = list(self.prediction_config.a_levels)
        costs = self.planner.perspective_costs(
            plan, context, {lv: self.prediction_config.a_value(lv) for lv in levels})

        active = costs['levels'][rc.a_level]
        j_r = {Perspective.EGOISTIC: costs['J_e'],
               Perspective.ALTRUISTIC: active['J_a']}.get(rc.perspective, active['J_c'])
        v_k = float(plan.inputs[0, 0])
        ref = scenario.reference
        error = reference_error(self.q.as_array(), v_k, self.lam, ref.curve, ref.v_ref)

        row = {
            'k': k, 't': k * scenario.dt,
            'x': self.q.x, 'y': self.q.y, 'theta': self.q.theta, 'v': v_k,
            'lambda': self.lam,
            'J_r': j_r, 'J_e': costs['J_e'], 'J_a': active['J_a'], 'J_c': active['J_c'],
        }
        for lv in levels:
            row[f'J_a_{lv}'] = costs['levels'][lv]['J_a']
        for lv in levels:
            row[f'J_c_{lv}'] = costs['levels'][lv]['J_c']
        for i, obj in enumerate(context.objects):
            row[f'R_eo_{obj.object_id}'] = float(costs['r_ego'][0, i])
        for i, obj in enumerate(context.objects):
            row[f'R_oe_{obj.object_id}'] = float(active['r_obj'][0, i])

        row['ref_error'] = float(np.linalg.norm(error))
        row['min_object_distance'], row['collision'] = self._proximity(k)
        self.rows.append(row)

    def _proximity(self, k: int):
        """Distancia al objeto más cercano y solape de coberturas en k"""
        scenario = self.scenario
        if not scenario.objects:
            return math.nan, False
        poses = np.array([track.pose_at(k) for track in scenario.objects])
        distance = float(np.min(np.hypot(poses[:, 0] - self.q.x, poses[:, 1] - self.q.y)))
        collided = []
        for track, pose in zip(scenario.objects, poses):
            gap = circle_gap(self.q.x, self.q.y, self.q.theta, scenario.ego_footprint,
                             pose[0], pose[1], pose[2], track.footprint)
            if gap <= 0.0:
                collided.append(track.object_id)
        if collided:
            self.collisions += 1
            self.logger.warning(f"{scenario.id} paso {k}: colisión con objeto(s) {collided}")
        return distance, bool(collided)

    def _trace(self) -> RiskTrace:
        scenario = self.scenario
        rc = self.run_config
        levels = tuple(self.prediction_config.a_levels)
        columns = trace_columns(levels, [t.object_id for t in scenario.objects])
        frame = pd.DataFrame(self.rows, columns=columns)
        trace = RiskTrace(scenario_id=scenario.id, cluster_tag=scenario.cluster_tag,
                          perspective=rc.perspective.value, a_level=rc.recorded_level,
                          seed=rc.seed, frame=frame, levels=levels,
                          evaluation_level=rc.a_level)
        trace.check()
        return trace

    def get_metrics(self) -> Dict:
        """
        Métricas del último bucle

        Returns:
            Diccionario con pasos, colisiones y tiempo medio por paso
        """
        return {
            'steps': len(self.rows),
            'collisions': self.collisions,
            'avg_step_time': self.avg_step_time,
        }


def run_scenario(scenario: Scenario, run_config: Optional[RunConfig] = None) -> RiskTrace:
    """Simula un escenario con la configuración dada (ver ScenarioRunner)"""
    return ScenarioRunner(run_config).run(scenario)
