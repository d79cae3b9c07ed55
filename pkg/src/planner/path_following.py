"""
Seguimiento de trayectoria del ego
Dinámica de uniciclo, progreso sobre la trayectoria y costes de referencia,
campo potencial (APF) y esfuerzo de control
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config.settings import PLANNER_CONFIG
from src.core.exceptions import ConfigError, ContractViolation
from src.scenario.curves import PolynomialCurve, project_to_curve, wrap_angle

logger = logging.getLogger(__name__)


def _positive_definite(matrix: np.ndarray) -> bool:
    """Simétrica con pivotes de Cholesky positivos"""
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
        return False
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class APFParams:
    """Constantes de los potenciales de carretera y de carril"""
    a_road: float = 1.0
    epsilon: float = 0.5
    a_lane: float = 1.0
    sigma_lane: float = 0.5
    scan_nodes: int = 128


@dataclass(frozen=True)
class OptimizerParams:
    """Parámetros del optimizador de entropía cruzada"""
    n_samples: int = 256
    n_elite: int = 32
    n_iters: int = 6
    init_sigma_u: Tuple[float, float] = (2.0, 0.05)
    seed: int = 0


@dataclass(frozen=True)
class PlannerConfig:
    """Vista tipada de PLANNER_CONFIG"""
    n_p: int
    dt: float
    w: np.ndarray = field(repr=False)
    w_ctrl: np.ndarray = field(repr=False)
    w_apf: float
    apf: APFParams
    v_max: float
    dtheta_max: float
    x_bounds: Tuple[float, float]
    y_bounds: Tuple[float, float]
    state_penalty: float
    progress_nodes: int
    progress_tolerance: float
    optimizer: OptimizerParams

    def __post_init__(self):
        if self.n_p < 1:
            raise ConfigError(f"N_P debe ser >= 1, recibido {self.n_p}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt debe ser > 0, recibido {self.dt}")
        if self.w.shape != (4, 4) or not _positive_definite(self.w):
            raise ConfigError("W debe ser una matriz 4x4 definida positiva")
        if self.w_ctrl.shape != (2, 2) or not _positive_definite(self.w_ctrl):
            raise ConfigError("W_ctrl debe ser una matriz 2x2 definida positiva")
        if self.w_apf < 0.0:
            raise ConfigError(f"W_APF debe ser >= 0, recibido {self.w_apf}")
        if self.v_max < 0.0 or self.dtheta_max < 0.0:
            raise ConfigError(f"Conjunto de entradas vacío: v_max={self.v_max}, "
                              f"dtheta_max={self.dtheta_max}")
        if self.x_bounds[0] > self.x_bounds[1] or self.y_bounds[0] > self.y_bounds[1]:
            raise ConfigError("Conjunto de estados vacío")
        opt = self.optimizer
        if not 0 < opt.n_elite < opt.n_samples:
            raise ConfigError(f"Se requiere 0 < n_elite < n_samples: {opt.n_elite} / {opt.n_samples}")
        if opt.n_iters < 1:
            raise ConfigError(f"n_iters debe ser >= 1, recibido {opt.n_iters}")

    @classmethod
    def from_dict(cls, config: Optional[Dict] = None) -> 'PlannerConfig':
        config = config or PLANNER_CONFIG
        apf = config.get('apf', {})
        opt = config.get('optimizer', {})
        bounds = config.get('state_bounds', {})
        progress = config.get('progress', {})
        try:
            return cls(
                n_p=int(config['n_p']),
                dt=float(config['dt']),
                w=np.asarray(config['w'], dtype=float),
                w_ctrl=np.asarray(config['w_ctrl'], dtype=float),
                w_apf=float(config['w_apf']),
                apf=APFParams(**apf),
                v_max=float(config['v_max']),
                dtheta_max=float(config['dtheta_max']),
                x_bounds=tuple(float(b) for b in bounds.get('x', (-1.0e4, 1.0e4))),
                y_bounds=tuple(float(b) for b in bounds.get('y', (-1.0e4, 1.0e4))),
                state_penalty=float(config.get('state_penalty', 1.0e6)),
                progress_nodes=int(progress.get('scan_nodes', 512)),
                progress_tolerance=float(progress.get('tolerance', 1e-4)),
                optimizer=OptimizerParams(
                    n_samples=int(opt.get('n_samples', 256)),
                    n_elite=int(opt.get('n_elite', 32)),
                    n_iters=int(opt.get('n_iters', 6)),
                    init_sigma_u=tuple(float(s) for s in opt.get('init_sigma_u', (2.0, 0.05))),
                    seed=int(opt.get('seed', 0)),
                ),
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Configuración del planificador incompleta: {e}") from e

    @property
    def heading_weight(self) -> float:
        """Peso del rumbo en la distancia de configuración"""
        return float(self.w[2, 2])

    @property
    def u_lower(self) -> np.ndarray:
        return np.array([0.0, -self.dtheta_max])

    @property
    def u_upper(self) -> np.ndarray:
        return np.array([self.v_max, self.dtheta_max])


@dataclass(frozen=True)
class EgoState:
    """Estado q = (x, y, theta) del uniciclo"""
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def output(self, v: float) -> Tuple[np.ndarray, float]:
        """Salida h(q): configuración y_e y velocidad v_e (la comandada)"""
        return self.as_array(), float(v)


@dataclass(frozen=True)
class ControlInput:
    """Entrada u = (v, dtheta) por paso"""
    v: float
    dtheta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.dtheta])

    def in_bounds(self, cfg: PlannerConfig) -> bool:
        return 0.0 <= self.v <= cfg.v_max and abs(self.dtheta) <= cfg.dtheta_max


@dataclass
class PlannedTrajectory:
    """
    Plan del horizonte: N_P + 2 estados, N_P + 1 entradas y progresos

    cost contiene los términos por paso (J_P, J_APF, J_u) y el coste de
    riesgo agregado J_r.
    """
    states: np.ndarray
    inputs: np.ndarray
    progress: np.ndarray
    cost: Dict[str, np.ndarray]
    total_cost: float
    elite_costs: Tuple[float, ...] = ()

    @property
    def first_input(self) -> ControlInput:
        return ControlInput(float(self.inputs[0, 0]), float(self.inputs[0, 1]))


def step_dynamics(q: EgoState, u: ControlInput, dt: float,
                  cfg: Optional[PlannerConfig] = None) -> EgoState:
    """
    Paso del uniciclo discreto

    Args:
        q: Estado actual
        u: Entrada (v, dtheta), debe estar en U
        dt: Periodo de muestreo
        cfg: Configuración con los límites de U

    Returns:
        Estado siguiente
    """
    cfg = cfg or PlannerConfig.from_dict()
    if not u.in_bounds(cfg):
        raise ContractViolation(f"Entrada fuera de U: {u}")
    state = q.as_array()
    nxt = _unicycle_step(state, np.array([u.v]), np.array([u.dtheta]), dt)
    return EgoState(float(nxt[0]), float(nxt[1]), float(nxt[2]))


def _unicycle_step(state: np.ndarray, v: np.ndarray, dtheta: np.ndarray, dt: float) -> np.ndarray:
    x = state[..., 0] + v * np.cos(state[..., 2]) * dt
    y = state[..., 1] + v * np.sin(state[..., 2]) * dt
    theta = state[..., 2] + dtheta
    return np.stack([x, y, theta], axis=-1).reshape(state.shape)


def rollout(q0: np.ndarray, inputs: np.ndarray, dt: float) -> np.ndarray:
    """
    Estados de un lote de secuencias de entradas

    Args:
        q0: Estado inicial (3,)
        inputs: (..., H, 2)

    Returns:
        (..., H + 1, 3) empezando en q0
    """
    inputs = np.asarray(inputs, dtype=float)
    lead = inputs.shape[:-2]
    h = inputs.shape[-2]
    states = np.empty(lead + (h + 1, 3))
    states[..., 0, :] = q0
    for n in range(h):
        states[..., n + 1, :] = _unicycle_step(states[..., n, :], inputs[..., n, 0],
                                               inputs[..., n, 1], dt)
    return states


def replay(q0: EgoState, inputs: np.ndarray, dt: float,
           cfg: Optional[PlannerConfig] = None) -> np.ndarray:
    """Reproduce una secuencia de entradas con step_dynamics (H + 1, 3)"""
    states = [q0]
    for v, dtheta in np.asarray(inputs, dtype=float):
        states.append(step_dynamics(states[-1], ControlInput(float(v), float(dtheta)), dt, cfg))
    return np.array([s.as_array() for s in states])


def init_progress(y_e: Sequence[float], path: PolynomialCurve, bounds: Tuple[float, float],
                  heading_weight: float = 1.0, scan_nodes: int = 512,
                  tolerance: float = 1e-4) -> float:
    """
    Progreso inicial: punto de la trayectoria más cercano a la configuración

    Args:
        y_e: (x, y, theta) del ego
        path: Trayectoria de referencia ajustada
        bounds: [lambda_0, lambda_g]
        heading_weight: Peso del rumbo en la distancia (entrada de W)

    Returns:
        lambda en bounds; los empates van al menor
    """
    lam, _ = project_to_curve(path, y_e[0], y_e[1], y_e[2], lam_bounds=bounds,
                              heading_weight=heading_weight, scan_nodes=scan_nodes,
                              tolerance=tolerance)
    return float(lam)


def advance_progress(lam, v_e, theta_e, theta_p, dt: float,
                     bounds: Tuple[float, float]):
    """Progreso aproximado: lambda + v cos(theta_e - theta_p) dt, acotado"""
    nxt = np.clip(np.asarray(lam) + np.asarray(v_e) * np.cos(np.asarray(theta_e) - np.asarray(theta_p)) * dt,
                  bounds[0], bounds[1])
    return nxt if np.ndim(nxt) else float(nxt)


def progress_sequence(lam_k: float, states: np.ndarray, v: np.ndarray, path: PolynomialCurve,
                      bounds: Tuple[float, float], dt: float) -> np.ndarray:
    """
    Progreso a lo largo de un lote de planes

    Args:
        lam_k: Progreso inicial
        states: (..., H + 1, 3)
        v: (..., H) velocidades comandadas

    Returns:
        (..., H + 1) progresos
    """
    h = v.shape[-1]
    lam = np.empty(states.shape[:-1])
    lam[..., 0] = lam_k
    for n in range(h):
        theta_p = path.tangent_angle(lam[..., n])
        lam[..., n + 1] = advance_progress(lam[..., n], v[..., n], states[..., n, 2],
                                           theta_p, dt, bounds)
    return lam


def reference_error(y_e: np.ndarray, v_e, lam, path: PolynomialCurve, v_ref: float) -> np.ndarray:
    """
    Error de referencia e = (y_e - y_P(lambda), v_e - v_ref)

    Args:
        y_e: (..., 3) configuración (x, y, theta)
        v_e: (...) velocidad
        lam: (...) progreso

    Returns:
        (..., 4) con el rumbo envuelto a (-pi, pi]
    """
    y_e = np.asarray(y_e, dtype=float)
    px, py = path.position(lam)
    theta_p = path.tangent_angle(lam)
    return np.stack([
        y_e[..., 0] - px,
        y_e[..., 1] - py,
        wrap_angle(y_e[..., 2] - theta_p),
        np.asarray(v_e, dtype=float) - v_ref,
    ], axis=-1)


def path_cost(e: np.ndarray, w: np.ndarray):
    """J_P = e^T W e sobre el último eje"""
    e = np.asarray(e, dtype=float)
    cost = np.einsum('...i,ij,...j->...', e, w, e)
    return cost if np.ndim(cost) else float(cost)


def control_cost(u: np.ndarray, u_prev: np.ndarray, w_ctrl: np.ndarray):
    """J_u = (dv, ddtheta)^T W_ctrl (dv, ddtheta) con dv = v - v_prev"""
    du = np.asarray(u, dtype=float) - np.asarray(u_prev, dtype=float)
    cost = np.einsum('...i,ij,...j->...', du, w_ctrl, du)
    return cost if np.ndim(cost) else float(cost)


def control_cost_sequence(inputs: np.ndarray, u_prev: np.ndarray, w_ctrl: np.ndarray) -> np.ndarray:
    """J_u por paso de un lote (..., H, 2), el primero respecto a u_prev"""
    inputs = np.asarray(inputs, dtype=float)
    prev = np.concatenate([np.broadcast_to(u_prev, inputs.shape[:-2] + (1, 2)),
                           inputs[..., :-1, :]], axis=-2)
    return control_cost(inputs, prev, w_ctrl)


def boundary_distance(x, y, curve: PolynomialCurve, scan_nodes: int = 128,
                      tolerance: float = 1e-4) -> np.ndarray:
    """Distancia al punto más cercano de un contorno (en su propio parámetro)"""
    _, d2 = project_to_curve(curve, x, y, scan_nodes=scan_nodes, tolerance=tolerance)
    return np.sqrt(np.maximum(d2, 0.0))


def apf_cost(y_e: np.ndarray, roads: Sequence, lanes: Sequence, w_apf: float,
             params: Optional[APFParams] = None):
    """
    Coste de campo potencial W_APF [sum J_road + sum J_lane]^2

    J_road = (A_r / (d + eps))^2 y J_lane = A_l exp(-d^2 / (2 sigma_l^2)),
    con d la distancia al punto más cercano de cada curva.

    Args:
        y_e: (..., >=2) posiciones (x, y, ...)
        roads: Contornos no cruzables (BoundaryCurve o PolynomialCurve)
        lanes: Marcas de carril cruzables
        w_apf: Peso W_APF
        params: Constantes del potencial

    Returns:
        Coste con la forma de los ejes iniciales
    """
    params = params or APFParams()
    y_e = np.asarray(y_e, dtype=float)
    x = y_e[..., 0]
    y = y_e[..., 1]
    potential = np.zeros(x.shape)
    for road in roads:
        d = boundary_distance(x, y, getattr(road, 'curve', road), params.scan_nodes)
        potential = potential + (params.a_road / (d + params.epsilon)) ** 2
    for lane in lanes:
        d = boundary_distance(x, y, getattr(lane, 'curve', lane), params.scan_nodes)
        potential = potential + params.a_lane * np.exp(-d ** 2 / (2.0 * params.sigma_lane ** 2))
    cost = w_apf * potential ** 2
    return cost if np.ndim(cost) else float(cost)


def state_violations(states: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
    """Número de pasos fuera de Q por plan"""
    x = states[..., 0]
    y = states[..., 1]
    outside = ((x < cfg.x_bounds[0]) | (x > cfg.x_bounds[1])
               | (y < cfg.y_bounds[0]) | (y > cfg.y_bounds[1]))
    return outside.sum(axis=-1)
