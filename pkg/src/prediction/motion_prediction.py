"""
Predicción estocástica de movimiento
CTRV con crecimiento lineal de la incertidumbre, propagación de momentos a
(v, theta) y construcción de las dos perspectivas w(e<-o) y w(o<-e)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Optional, Tuple

import numpy as np

from config.settings import A_LEVELS, PREDICTION_CONFIG
from src.core.exceptions import ConfigError, ContractViolation, HorizonError

if TYPE_CHECKING:
    from src.scenario.scenario_model import ObjectTrack

logger = logging.getLogger(__name__)

# Orden de las componentes en UncertaintyParams
X, Y, THETA, V = 0, 1, 2, 3


class PropagationMode(Enum):
    """Fórmulas de propagación de momentos de posición a (v, theta)"""
    CORRECTED = "corrected"          # Propagación estándar de primer orden
    LITERAL = "literal"  # Fórmulas evaluadas al pie de la letra


@dataclass(frozen=True)
class KinematicState:
    """Estado cinemático de un actor (omega sólo se usa en la predicción)"""
    x: float
    y: float
    theta: float
    v: float
    omega: float = 0.0

    def __post_init__(self):
        if self.v < 0.0:
            raise ContractViolation(f"v debe ser >= 0, recibido {self.v}")


@dataclass(frozen=True)
class PredictionConfig:
    """Vista tipada de PREDICTION_CONFIG y A_LEVELS"""
    sigma_0: Tuple[float, float] = (0.1, 0.1)
    q: Tuple[float, float] = (0.05, 0.05)
    accel_limit: float = 8.0
    sigma_min: Dict[str, float] = field(default_factory=lambda: dict(PREDICTION_CONFIG['sigma_min']))
    sigma_max: Dict[str, float] = field(default_factory=lambda: dict(PREDICTION_CONFIG['sigma_max']))
    straight_turn_rate: float = 1e-6
    propagation_mode: PropagationMode = PropagationMode.CORRECTED
    a_levels: Dict[str, float] = field(default_factory=lambda: dict(A_LEVELS))

    def __post_init__(self):
        for key in ('position', 'heading', 'velocity'):
            lo = self.sigma_min.get(key)
            hi = self.sigma_max.get(key)
            if lo is None or hi is None:
                raise ConfigError(f"Faltan límites de sigma para '{key}'")
            if not 0.0 < lo < hi:
                raise ConfigError(f"Límites de sigma inválidos para '{key}': [{lo}, {hi}]")
        if self.accel_limit <= 0.0:
            raise ConfigError(f"accel_limit debe ser > 0, recibido {self.accel_limit}")
        levels = self.a_levels
        if set(levels) != {'low', 'moderate', 'high'}:
            raise ConfigError(f"a_levels debe definir low, moderate y high: {sorted(levels)}")
        if levels['moderate'] != 1.0:
            raise ConfigError("El nivel moderate de a debe ser exactamente 1")
        if not 0.0 < levels['low'] < 1.0 < levels['high']:
            raise ConfigError(f"Se requiere 0 < a_low < 1 < a_high: {levels}")

    @classmethod
    def from_dict(cls, config: Optional[Dict] = None,
                  a_levels: Optional[Dict] = None) -> 'PredictionConfig':
        """
        Construye la configuración desde un diccionario tipo PREDICTION_CONFIG

        Args:
            config: Diccionario (usa PREDICTION_CONFIG por defecto)
            a_levels: Factores de escala (usa A_LEVELS por defecto)
        """
        config = config or PREDICTION_CONFIG
        try:
            mode = PropagationMode(config.get('propagation_mode', 'corrected'))
        except ValueError as e:
            raise ConfigError(f"propagation_mode desconocido: {config.get('propagation_mode')}") from e
        return cls(
            sigma_0=tuple(float(s) for s in config['sigma_0']),
            q=tuple(float(s) for s in config['q']),
            accel_limit=float(config['accel_limit']),
            sigma_min={k: float(v) for k, v in config['sigma_min'].items()},
            sigma_max={k: float(v) for k, v in config['sigma_max'].items()},
            straight_turn_rate=float(config.get('straight_turn_rate', 1e-6)),
            propagation_mode=mode,
            a_levels={k: float(v) for k, v in (a_levels or A_LEVELS).items()},
        )

    @property
    def lower_bounds(self) -> np.ndarray:
        """Cotas inferiores de sigma en el orden (x, y, theta, v)"""
        s = self.sigma_min
        return np.array([s['position'], s['position'], s['heading'], s['velocity']])

    @property
    def upper_bounds(self) -> np.ndarray:
        """Cotas superiores de sigma en el orden (x, y, theta, v)"""
        s = self.sigma_max
        return np.array([s['position'], s['position'], s['heading'], s['velocity']])

    def a_value(self, level: str) -> float:
        if level not in self.a_levels:
            raise ConfigError(f"Nivel de incertidumbre desconocido: {level}")
        return self.a_levels[level]


@dataclass
class UncertaintyParams:
    """
    Medias y desviaciones de (x, y, theta, v) sobre el horizonte

    mean y sigma tienen forma (..., N_P + 1, 4); los ejes iniciales permiten
    agrupar candidatos del optimizador.
    """
    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.sigma.shape or self.mean.shape[-1] != 4:
            raise ContractViolation(
                f"mean y sigma deben tener forma (..., H, 4): {self.mean.shape} / {self.sigma.shape}")

    @property
    def horizon(self) -> int:
        return self.mean.shape[-2]

    def within_bounds(self, cfg: PredictionConfig, rtol: float = 1e-12) -> bool:
        """Todas las sigma dentro de [sigma_min, sigma_max]"""
        lo = cfg.lower_bounds * (1.0 - rtol)
        hi = cfg.upper_bounds * (1.0 + rtol)
        return bool(np.all((self.sigma >= lo) & (self.sigma <= hi)))


def clamp_sigma(sigma: np.ndarray, cfg: PredictionConfig) -> np.ndarray:
    """Acota sigma (..., 4) componente a componente"""
    return np.clip(sigma, cfg.lower_bounds, cfg.upper_bounds)


def predict_ctrv(state: KinematicState, steps: int, dt: float,
                 cfg: Optional[PredictionConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Predicción CTRV de la posición con incertidumbre de crecimiento lineal

    Args:
        state: Estado inicial (incluye omega)
        steps: Pasos de predicción N_P
        dt: Periodo de muestreo (s)
        cfg: Configuración de predicción

    Returns:
        (medias, sigmas) de forma (steps + 1, 2); la fila 0 es el estado actual
    """
    if steps < 1:
        raise ContractViolation(f"steps debe ser >= 1, recibido {steps}")
    cfg = cfg or PredictionConfig.from_dict()

    m = np.arange(steps + 1, dtype=float)
    t = m * dt
    theta = state.theta + state.omega * t
    if abs(state.omega) < cfg.straight_turn_rate:
        x = state.x + state.v * np.cos(state.theta) * t
        y = state.y + state.v * np.sin(state.theta) * t
    else:
        r = state.v / state.omega
        x = state.x + r * (np.sin(theta) - np.sin(state.theta))
        y = state.y + r * (np.cos(state.theta) - np.cos(theta))

    means = np.column_stack([x, y])
    sigmas = np.asarray(cfg.sigma_0)[None, :] + m[:, None] * np.asarray(cfg.q)[None, :]
    sigmas = np.clip(sigmas, cfg.sigma_min['position'], cfg.sigma_max['position'])
    return means, sigmas


def _increments(means: np.ndarray) -> np.ndarray:
    """Incremento por paso: hacia delante en la fila 0, hacia atrás en el resto"""
    delta = np.empty_like(means)
    delta[..., 1:, :] = means[..., 1:, :] - means[..., :-1, :]
    delta[..., 0, :] = means[..., 1, :] - means[..., 0, :]
    return delta


def propagate_moments(means: np.ndarray, sigmas: np.ndarray, dt: float,
                      mode: PropagationMode = PropagationMode.CORRECTED,
                      cfg: Optional[PredictionConfig] = None,
                      initial_heading: float = 0.0) -> Dict[str, np.ndarray]:
    """
    Propaga los momentos de posición a velocidad y rumbo

    Args:
        means: Medias de posición (..., H, 2), H >= 2
        sigmas: Desviaciones de posición (..., H, 2)
        dt: Periodo de muestreo (s)
        mode: Fórmulas de propagación
        cfg: Configuración (límites de sigma)
        initial_heading: Rumbo usado si los primeros pasos no se desplazan

    Returns:
        Diccionario con mu_v, sigma_v, mu_theta, sigma_theta de forma (..., H)
    """
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if means.shape[-2] < 2:
        raise ContractViolation("propagate_moments necesita al menos 2 pasos")
    cfg = cfg or PredictionConfig.from_dict()

    delta = _increments(means)
    dx, dy = delta[..., 0], delta[..., 1]
    sx, sy = sigmas[..., 0], sigmas[..., 1]
    dist2 = dx ** 2 + dy ** 2
    dist = np.sqrt(dist2)
    moving = dist > 1e-12
    safe2 = np.where(moving, dist2, 1.0)

    mu_v = dist / dt
    raw_heading = np.arctan2(dy, dx)

    # Rumbo mantenido del último paso con desplazamiento
    h = means.shape[-2]
    idx = np.where(moving, np.arange(h), -1)
    idx = np.maximum.accumulate(idx, axis=-1)
    held = np.take_along_axis(raw_heading, np.clip(idx, 0, None), axis=-1)
    mu_theta = np.where(idx >= 0, held, initial_heading)

    if mode is PropagationMode.CORRECTED:
        var_v = ((dx * sx) ** 2 + (dy * sy) ** 2) / safe2 / dt ** 2
        var_theta = (dx ** 2 * sy ** 2 + dy ** 2 * sx ** 2) / safe2 ** 2
    else:
        # sigma_v^2 = (dx/|d|)^2 + (dy/|d|)^2 = 1 tal cual se imprimió
        var_v = (dx ** 2 + dy ** 2) / safe2
        mx, my = means[..., 0], means[..., 1]
        denom = (mx + my) ** 2
        with np.errstate(divide='ignore', invalid='ignore'):
            var_theta = np.where(denom > 0.0, (mx ** 2 * sy ** 2 + my ** 2 * sx ** 2) / denom,
                                 cfg.sigma_max['heading'] ** 2)

    sigma_v = np.where(moving, np.sqrt(var_v), np.sqrt(0.5 * (sx ** 2 + sy ** 2)) / dt)
    sigma_theta = np.where(moving, np.sqrt(var_theta), cfg.sigma_max['heading'])

    sigma_v = np.clip(sigma_v, cfg.sigma_min['velocity'], cfg.sigma_max['velocity'])
    sigma_theta = np.clip(sigma_theta, cfg.sigma_min['heading'], cfg.sigma_max['heading'])

    return {
        'mu_v': mu_v,
        'sigma_v': sigma_v,
        'mu_theta': mu_theta,
        'sigma_theta': sigma_theta,
    }


def ego_view_from_state(state: KinematicState, n_p: int, dt: float,
                        cfg: Optional[PredictionConfig] = None) -> UncertaintyParams:
    """
    w(e<-o) de un objeto a partir de un estado inicial CTRV

    Args:
        state: Estado semilla del objeto
        n_p: Horizonte N_P
        dt: Periodo de muestreo

    Returns:
        UncertaintyParams de forma (N_P + 1, 4)
    """
    cfg = cfg or PredictionConfig.from_dict()
    means, sigmas = predict_ctrv(state, n_p, dt, cfg)
    moments = propagate_moments(means, sigmas, dt, cfg.propagation_mode, cfg,
                                initial_heading=state.theta)

    mean = np.column_stack([means[:, 0], means[:, 1], moments['mu_theta'], moments['mu_v']])
    sigma = np.column_stack([sigmas[:, 0], sigmas[:, 1], moments['sigma_theta'], moments['sigma_v']])
    return UncertaintyParams(mean=mean, sigma=clamp_sigma(sigma, cfg))


def state_seeded_state(track: 'ObjectTrack', k: int, dt: float) -> KinematicState:
    """Estado registrado en k con la velocidad de giro registrada"""
    poses = track.poses
    x, y, theta, v = poses[k]
    omega = (poses[k][2] - poses[k - 1][2]) / dt if k >= 1 else 0.0
    return KinematicState(x=x, y=y, theta=theta, v=v, omega=omega)


def history_seeded_state(track: 'ObjectTrack', k: int, dt: float) -> KinematicState:
    """
    Estado estimado por diferencias finitas de las posiciones pasadas

    Sustituye al predictor aprendido; requiere k >= 2.
    """
    poses = np.asarray(track.poses, dtype=float)
    p0, p1, p2 = poses[k - 2, :2], poses[k - 1, :2], poses[k, :2]
    d_prev = p1 - p0
    d_last = p2 - p1
    speed = float(np.hypot(*d_last)) / dt
    if np.hypot(*d_last) > 1e-12:
        heading = float(np.arctan2(d_last[1], d_last[0]))
    else:
        heading = float(poses[k, 2])
    if np.hypot(*d_prev) > 1e-12 and np.hypot(*d_last) > 1e-12:
        turn = np.arctan2(d_last[1], d_last[0]) - np.arctan2(d_prev[1], d_prev[0])
        omega = float(np.pi - np.mod(np.pi - turn, 2.0 * np.pi)) / dt
    else:
        omega = 0.0
    return KinematicState(x=float(poses[k, 0]), y=float(poses[k, 1]),
                          theta=heading, v=speed, omega=omega)


def track_acceleration(track: 'ObjectTrack', k: int, dt: float) -> float:
    """Aceleración longitudinal registrada en k (0 en k = 0)"""
    if k < 1:
        return 0.0
    return (track.poses[k][3] - track.poses[k - 1][3]) / dt


def build_ego_view(obj_track: 'ObjectTrack', k: int, n_p: int, dt: float,
                   cfg: Optional[PredictionConfig] = None) -> UncertaintyParams:
    """
    Predicción w(e<-o) de un objeto para n en [k, k + N_P]

    Regla híbrida: si la pista implica una aceleración por encima de
    accel_limit en k (o no hay historia suficiente) se usa CTRV desde el
    estado registrado; en otro caso CTRV sembrado con la historia.

    Args:
        obj_track: Pista reproducida del objeto
        k: Paso actual
        n_p: Horizonte N_P
        dt: Periodo de muestreo
        cfg: Configuración de predicción

    Returns:
        UncertaintyParams de forma (N_P + 1, 4)
    """
    cfg = cfg or PredictionConfig.from_dict()
    last = len(obj_track.poses) - 1
    if k < 0 or k > last:
        raise HorizonError(f"Paso {k} fuera de la pista del objeto {obj_track.object_id} (0..{last})")

    accel = track_acceleration(obj_track, k, dt)
    if k < 2 or abs(accel) > cfg.accel_limit:
        if k >= 2:
            logger.warning(f"Objeto {obj_track.object_id}: aceleración {accel:.2f} m/s^2 en k={k}, "
                         f"CTRV desde el estado registrado")
        state = state_seeded_state(obj_track, k, dt)
    else:
        state = history_seeded_state(obj_track, k, dt)

    return ego_view_from_state(state, n_p, dt, cfg)


def ego_sigma_track(planned_xy: np.ndarray, dt: float,
                    cfg: Optional[PredictionConfig] = None,
                    initial_heading: float = 0.0) -> np.ndarray:
    """
    Incertidumbre de la predicción propia del ego sobre su plan

    La posición crece como en la predicción de objetos; theta y v se
    obtienen con la propagación de momentos sobre las posiciones planificadas.

    Args:
        planned_xy: Posiciones planificadas (..., H, 2)

    Returns:
        sigma (..., H, 4) acotada
    """
    cfg = cfg or PredictionConfig.from_dict()
    planned_xy = np.asarray(planned_xy, dtype=float)
    h = planned_xy.shape[-2]
    m = np.arange(h, dtype=float)
    pos_sigma = np.asarray(cfg.sigma_0)[None, :] + m[:, None] * np.asarray(cfg.q)[None, :]
    pos_sigma = np.clip(pos_sigma, cfg.sigma_min['position'], cfg.sigma_max['position'])
    pos_sigma = np.broadcast_to(pos_sigma, planned_xy.shape)

    moments = propagate_moments(planned_xy, pos_sigma, dt, cfg.propagation_mode, cfg,
                                initial_heading=initial_heading)
    sigma = np.concatenate([pos_sigma, moments['sigma_theta'][..., None],
                            moments['sigma_v'][..., None]], axis=-1)
    return clamp_sigma(sigma, cfg)


def map_self_reflection(planned_states: np.ndarray, planned_v: np.ndarray,
                        ego_sigma: np.ndarray, a: float,
                        cfg: Optional[PredictionConfig] = None) -> UncertaintyParams:
    """
    Mapa de autorreflexión: cómo perciben los objetos el plan del ego

    Las medias son la configuración y velocidad planificadas; las sigma son
    clamp(a * sigma_e).

    Args:
        planned_states: (..., H, 3) con (x, y, theta)
        planned_v: (..., H) velocidad planificada
        ego_sigma: (..., H, 4) incertidumbre propia del ego
        a: Factor de escala (> 0)
        cfg: Configuración (límites de sigma)

    Returns:
        UncertaintyParams w(o<-e)
    """
    if not a > 0.0:
        raise ContractViolation(f"a debe ser > 0, recibido {a}")
    cfg = cfg or PredictionConfig.from_dict()
    mean = np.concatenate([np.asarray(planned_states, dtype=float),
                           np.asarray(planned_v, dtype=float)[..., None]], axis=-1)
    sigma = clamp_sigma(a * np.asarray(ego_sigma, dtype=float), cfg)
    return UncertaintyParams(mean=mean, sigma=np.broadcast_to(sigma, mean.shape).copy())
