"""
Control predictivo estocástico con riesgo por perspectivas
Optimizador de entropía cruzada sobre secuencias de entradas
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import PLANNER_CONFIG
from src.core.exceptions import ContractViolation
from src.geometry.collision_geometry import CircleCovering
from src.planner.path_following import (EgoState, PlannedTrajectory, PlannerConfig,
                                        apf_cost, control_cost_sequence, path_cost,
                                        progress_sequence, reference_error, replay,
                                        rollout, state_violations)
from src.prediction.motion_prediction import (PredictionConfig, UncertaintyParams,
                                              ego_sigma_track, map_self_reflection)
from src.risk.risk_engine import (DiscountSpec, RiskCostWeights, RiskEngine,
                                  risk_costs)
from src.scenario.curves import PolynomialCurve


class Perspective(Enum):
    """Selector del coste de riesgo optimizado"""
    EGOISTIC = "egoistic"        # J_e: riesgo percibido por el ego
    ALTRUISTIC = "altruistic"    # J_a: riesgo percibido por los objetos
    COLLECTIVE = "collective"    # J_c = (J_e + J_a) / 2


@dataclass
class ObjectForecast:
    """Predicción w(e<-o) de un objeto para el horizonte actual"""
    object_id: int
    footprint: CircleCovering
    w_eo: UncertaintyParams


@dataclass
class PlanningContext:
    """Todo lo que el optimizador necesita del escenario en el paso k"""
    reference: PolynomialCurve
    lambda_bounds: Tuple[float, float]
    v_ref: float
    ego_footprint: CircleCovering
    roads: Sequence = field(default_factory=tuple)
    lanes: Sequence = field(default_factory=tuple)
    objects: List[ObjectForecast] = field(default_factory=list)


class SMPCPlanner:
    """
    Planificador de horizonte deslizante con arranque en caliente
    """

    def __init__(self, config: Optional[Dict] = None,
                 risk_engine: Optional[RiskEngine] = None,
                 prediction_config: Optional[PredictionConfig] = None):
        """
        Inicializa el planificador

        Args:
            config: Diccionario tipo PLANNER_CONFIG
            risk_engine: Motor de riesgo compartido
            prediction_config: Configuración de predicción (mapa de autorreflexión)
        """
        self.logger = logging.getLogger(__name__)
        self.config = config or PLANNER_CONFIG
        self.cfg = PlannerConfig.from_dict(self.config)
        self.prediction_config = prediction_config or PredictionConfig.from_dict()
        self.risk = risk_engine or RiskEngine(prediction_config=self.prediction_config)
        self.warm_start: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        """Número de entradas por plan (N_P + 1)"""
        return self.cfg.n_p + 1

    def reset(self):
        self.warm_start = None

    # ------------------------------------------------------------------
    # Evaluación de riesgo
    # ------------------------------------------------------------------

    def ego_risks(self, states: np.ndarray, v: np.ndarray,
                  context: PlanningContext) -> np.ndarray:
        """R(e<-o) por paso y objeto: (..., H, N_o)"""
        lead = states.shape[:-1]
        out = np.zeros(lead + (len(context.objects),))
        for i, obj in enumerate(context.objects):
            out[..., i] = self.risk.ego_risk_batch(states, v, obj.w_eo.mean, obj.w_eo.sigma,
                                                   context.ego_footprint, obj.footprint)
        return out

    def object_risks(self, states: np.ndarray, v: np.ndarray, context: PlanningContext,
                     a: float, initial_heading: float) -> np.ndarray:
        """R(o<-e) por paso y objeto con el mapa de autorreflexión de factor a"""
        lead = states.shape[:-1]
        out = np.zeros(lead + (len(context.objects),))
        if not context.objects:
            return out
        sigma_e = ego_sigma_track(states[..., :2], self.cfg.dt, self.prediction_config,
                                  initial_heading=initial_heading)
        w_oe = map_self_reflection(states, v, sigma_e, a, self.prediction_config)
        for i, obj in enumerate(context.objects):
            mean = obj.w_eo.mean
            out[..., i] = self.risk.object_risk_batch(mean[:, :3], mean[:, 3], w_oe.mean,
                                                      w_oe.sigma, obj.footprint,
                                                      context.ego_footprint)
        return out

    def risk_terms(self, states: np.ndarray, v: np.ndarray, context: PlanningContext,
                   perspective: Perspective, a: float) -> Dict[str, np.ndarray]:
        """
        Costes de riesgo de un lote de planes

        Con perspectiva egoísta no se evalúa la perspectiva de los objetos,
        de modo que el resultado no depende de a.

        Returns:
            Diccionario con J_r y los costes calculados (J_e, J_a, J_c)
        """
        weights = RiskCostWeights(self.risk.settings.w_r)
        disc = DiscountSpec(self.risk.settings.c_d, self.cfg.n_p)
        r_ego = self.ego_risks(states, v, context)
        if perspective is Perspective.EGOISTIC:
            j_e, _, _ = risk_costs(r_ego, np.zeros_like(r_ego), weights, disc)
            return {'J_r': j_e, 'J_e': j_e}
        r_obj = self.object_risks(states, v, context, a, float(states[..., 0, 2].ravel()[0]))
        j_e, j_a, j_c = risk_costs(r_ego, r_obj, weights, disc)
        j_r = j_a if perspective is Perspective.ALTRUISTIC else j_c
        return {'J_r': j_r, 'J_e': j_e, 'J_a': j_a, 'J_c': j_c}

    def perspective_costs(self, plan: PlannedTrajectory, context: PlanningContext,
                          a_values: Dict[str, float]) -> Dict[str, object]:
        """
        Los tres costes de riesgo de un plan para varios niveles de a

        Se usa al registrar: todos los costes se guardan sea cual sea el
        selector activo.

        Args:
            plan: Plan aplicado en k
            context: Contexto del paso
            a_values: Nivel -> factor a

        Returns:
            Diccionario con J_e, r_ego (H, N_o) y, por nivel, J_a, J_c y r_obj
        """
        h = plan.inputs.shape[0]
        states = plan.states[None, :h, :]
        v = plan.inputs[None, :, 0]
        weights = RiskCostWeights(self.risk.settings.w_r)
        disc = DiscountSpec(self.risk.settings.c_d, self.cfg.n_p)

        r_ego = self.ego_risks(states, v, context)
        result = {'r_ego': r_ego[0], 'levels': {}}
        for level, a in a_values.items():
            r_obj = self.object_risks(states, v, context, a, float(plan.states[0, 2]))
            j_e, j_a, j_c = risk_costs(r_ego, r_obj, weights, disc)
            result['J_e'] = float(j_e[0])
            result['levels'][level] = {'J_a': float(j_a[0]), 'J_c': float(j_c[0]),
                                       'r_obj': r_obj[0]}
        if not a_values:
            j_e, _, _ = risk_costs(r_ego, np.zeros_like(r_ego), weights, disc)
            result['J_e'] = float(j_e[0])
        return result

    # ------------------------------------------------------------------
    # Coste total
    # ------------------------------------------------------------------

    def evaluate(self, q_k: np.ndarray, lam_k: float, u_prev: np.ndarray, inputs: np.ndarray,
                 context: PlanningContext, perspective: Perspective, a: float,
                 states: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """
        Coste de un lote de secuencias de entradas

        Args:
            q_k: Estado actual (3,)
            lam_k: Progreso actual
            u_prev: Última entrada aplicada (2,)
            inputs: (B, H, 2)
            states: Estados ya calculados (B, H + 1, 3), opcional

        Returns:
            Diccionario con total (B,), términos por paso (B, H) y costes de riesgo
        """
        cfg = self.cfg
        if states is None:
            states = rollout(q_k, inputs, cfg.dt)
        h = inputs.shape[-2]
        v = inputs[..., 0]
        lam = progress_sequence(lam_k, states, v, context.reference, context.lambda_bounds, cfg.dt)

        e = reference_error(states[..., :h, :], v, lam[..., :h], context.reference, context.v_ref)
        j_p = path_cost(e, cfg.w)
        j_apf = apf_cost(states[..., :h, :], context.roads, context.lanes, cfg.w_apf, cfg.apf)
        j_u = control_cost_sequence(inputs, u_prev, cfg.w_ctrl)
        risk = self.risk_terms(states[..., :h, :], v, context, perspective, a)

        penalty = cfg.state_penalty * state_violations(states, cfg)
        total = j_p.sum(axis=-1) + j_apf.sum(axis=-1) + j_u.sum(axis=-1) + risk['J_r'] + penalty

        result = {'total': total, 'J_P': j_p, 'J_APF': j_apf, 'J_u': j_u, 'progress': lam,
                  'penalty': penalty}
        result.update(risk)
        return result

    # ------------------------------------------------------------------
    # Optimizador
    # ------------------------------------------------------------------

    def _initial_mean(self, u_prev: np.ndarray) -> np.ndarray:
        if self.warm_start is not None and len(self.warm_start) == self.horizon:
            # Plan anterior desplazado un paso
            return np.concatenate([self.warm_start[1:], self.warm_start[-1:]], axis=0)
        return np.tile(np.array([u_prev[0], 0.0]), (self.horizon, 1))

    def optimize(self, q_k: EgoState, lam_k: float, u_prev: Sequence[float],
                 context: PlanningContext, perspective: Perspective, a: float,
                 k: int = 0, seed: Optional[int] = None) -> PlannedTrajectory:
        """
        Minimiza sum(J_P + J_APF + J_u) + J_r sobre secuencias de entradas

        Muestrea secuencias gaussianas recortadas a U, reajusta media y
        desviación sobre las élites e itera n_iters veces. Las élites pasan a
        la población siguiente junto con la media sin perturbar.

        Args:
            q_k: Estado actual del ego
            lam_k: Progreso actual
            u_prev: Última entrada aplicada (v, dtheta)
            context: Contexto del escenario en k
            perspective: Coste de riesgo seleccionado
            a: Factor de incertidumbre de los objetos sobre el ego
            k: Paso actual (forma parte de la semilla)
            seed: Semilla base (la de la configuración por defecto)

        Returns:
            PlannedTrajectory con la mejor secuencia encontrada
        """
        cfg = self.cfg
        opt = cfg.optimizer
        seed = opt.seed if seed is None else seed
        rng = np.random.default_rng([int(seed), int(k)])
        q0 = q_k.as_array()
        u_prev = np.asarray(u_prev, dtype=float)
        lower, upper = cfg.u_lower, cfg.u_upper

        mean = np.clip(self._initial_mean(u_prev), lower, upper)
        std = np.tile(np.asarray(opt.init_sigma_u, dtype=float), (self.horizon, 1))
        std_floor = 1e-3 * np.asarray(opt.init_sigma_u, dtype=float)

        elites: Optional[np.ndarray] = None
        best_inputs = mean.copy()
        best_cost = np.inf
        elite_history: List[float] = []

        for it in range(opt.n_iters):
            samples = mean[None] + std[None] * rng.standard_normal((opt.n_samples, self.horizon, 2))
            samples[0] = mean
            if elites is not None:
                n_carry = min(len(elites), opt.n_samples - 1)
                samples[1:1 + n_carry] = elites[:n_carry]
            samples = np.clip(samples, lower, upper)

            costs = self.evaluate(q0, lam_k, u_prev, samples, context, perspective, a)['total']
            order = np.argsort(costs, kind='stable')
            elites = samples[order[:opt.n_elite]]
            elite_cost = float(np.mean(costs[order[:opt.n_elite]]))
            elite_history.append(elite_cost)

            if costs[order[0]] < best_cost:
                best_cost = float(costs[order[0]])
                best_inputs = samples[order[0]].copy()

            mean = elites.mean(axis=0)
            std = np.maximum(elites.std(axis=0), std_floor)
            self.logger.debug(f"k={k} iteración {it}: coste élite {elite_cost:.4f}, "
                              f"mejor {best_cost:.4f}")

        self.warm_start = best_inputs.copy()
        return self._finalize(q_k, lam_k, u_prev, best_inputs, context, perspective, a,
                              tuple(elite_history))

    def _finalize(self, q_k: EgoState, lam_k: float, u_prev: np.ndarray, inputs: np.ndarray,
                  context: PlanningContext, perspective: Perspective, a: float,
                  elite_history: Tuple[float, ...]) -> PlannedTrajectory:
        """Reproduce la mejor secuencia con step_dynamics y desglosa su coste"""
        states = replay(q_k, inputs, self.cfg.dt, self.cfg)
        outside = int(state_violations(states, self.cfg))
        if outside:
            self.logger.warning(f"El mejor plan sale de los límites de estado en {outside} pasos")
        result = self.evaluate(q_k.as_array(), lam_k, u_prev, inputs[None], context,
                               perspective, a, states=states[None])
        cost = {key: np.asarray(value)[0] for key, value in result.items()}
        return PlannedTrajectory(
            states=states,
            inputs=inputs.copy(),
            progress=cost.pop('progress'),
            cost=cost,
            total_cost=float(cost['total']),
            elite_costs=elite_history,
        )


def optimize_inputs(q_k: EgoState, lam_k: float, u_prev: Sequence[float],
                    context: PlanningContext, perspective: Perspective, a: float,
                    planner: Optional[SMPCPlanner] = None, k: int = 0,
                    seed: Optional[int] = None) -> PlannedTrajectory:
    """
    Resuelve el problema SMPC en el paso k (ver SMPCPlanner.optimize)

    Sin planner se crea uno nuevo con la configuración por defecto y sin
    arranque en caliente.
    """
    if not a > 0.0:
        raise ContractViolation(f"a debe ser > 0, recibido {a}")
    planner = planner or SMPCPlanner()
    return planner.optimize(q_k, lam_k, u_prev, context, perspective, a, k=k, seed=seed)
