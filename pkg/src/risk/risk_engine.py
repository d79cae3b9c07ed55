"""
Motor de riesgo por perspectivas
Severidad de colisión esperada por cuadratura sobre el conjunto polar de
colisión, desde el ego (e<-o) y desde cada objeto (o<-e), y costes de
riesgo egoísta, altruista y colectivo
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from config.settings import RISK_CONFIG
from src.core.exceptions import ConfigError, ContractViolation
from src.geometry.collision_geometry import (TWO_PI, CircleCovering, decompose_disjoint,
                                             heading_intervals, radial_bound)
from src.prediction.motion_prediction import PredictionConfig, UncertaintyParams
from src.risk.severity import KineticEnergySeverity, SeverityModel, cell_weight

logger = logging.getLogger(__name__)

# Copias de 2pi sumadas para la normal envuelta de theta_rel
_WRAPS = np.arange(-2, 3, dtype=float) * TWO_PI

# Velocidad media del ego percibido en R(o<-e): la del objeto o la planificada
OBJECT_VIEW_VELOCITIES = ('object', 'ego')


@dataclass(frozen=True)
class RiskSettings:
    """Vista tipada de RISK_CONFIG"""
    n_rho: int = 48
    n_phi: int = 96
    w_r: float = 0.1
    c_d: float = 0.5
    mass_cutoff: float = 1e-13
    far_sigmas: float = 8.0
    chunk_cells: int = 2_000_000
    object_view_velocity: str = 'object'

    def __post_init__(self):
        if self.object_view_velocity not in OBJECT_VIEW_VELOCITIES:
            raise ConfigError(f"object_view_velocity desconocido: {self.object_view_velocity}")
        if self.n_rho < 8 or self.n_phi < 8:
            raise ConfigError(f"La malla necesita n_rho, n_phi >= 8: ({self.n_rho}, {self.n_phi})")
        if not self.w_r > 0.0:
            raise ConfigError(f"w_r debe ser > 0, recibido {self.w_r}")
        if self.c_d < 0.0:
            raise ConfigError(f"c_d debe ser >= 0, recibido {self.c_d}")

    @classmethod
    def from_dict(cls, config: Optional[Dict] = None) -> 'RiskSettings':
        config = config or RISK_CONFIG
        return cls(
            n_rho=int(config['n_rho']),
            n_phi=int(config['n_phi']),
            w_r=float(config['w_r']),
            c_d=float(config['c_d']),
            mass_cutoff=float(config.get('mass_cutoff', 1e-13)),
            far_sigmas=float(config.get('far_sigmas', 8.0)),
            chunk_cells=int(config.get('chunk_cells', 2_000_000)),
            object_view_velocity=str(config.get('object_view_velocity', 'object')),
        )


@dataclass(frozen=True)
class QuadratureGrid:
    """
    Malla polar de punto medio sobre [0, rho_max] x [0, 2pi)

    Los nodos se ordenan por anillos: índice = i_rho * n_phi + i_phi.
    Los pesos rho_i * d_rho * d_phi suman pi * rho_max^2.
    """
    n_rho: int
    n_phi: int
    rho_max: float

    @property
    def d_rho(self) -> float:
        return self.rho_max / self.n_rho

    @property
    def d_phi(self) -> float:
        return TWO_PI / self.n_phi

    @property
    def rho_nodes(self) -> np.ndarray:
        return (np.arange(self.n_rho) + 0.5) * self.d_rho

    @property
    def phi_nodes(self) -> np.ndarray:
        return (np.arange(self.n_phi) + 0.5) * self.d_phi

    def nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        """(rho, phi) de todos los nodos, aplanados"""
        rho, phi = np.meshgrid(self.rho_nodes, self.phi_nodes, indexing='ij')
        return rho.ravel(), phi.ravel()

    def weights(self) -> np.ndarray:
        rho, _ = self.nodes()
        return rho * self.d_rho * self.d_phi


@dataclass(frozen=True)
class DiscountSpec:
    """Descuento temporal gamma(m) = exp(c_d m / N_P) / N_P"""
    c_d: float
    n_p: int

    def __post_init__(self):
        if self.c_d < 0.0:
            raise ContractViolation(f"c_d debe ser >= 0, recibido {self.c_d}")
        if self.n_p < 1:
            raise ContractViolation(f"N_P debe ser >= 1, recibido {self.n_p}")


@dataclass(frozen=True)
class RiskCostWeights:
    """Peso w_R de los costes de riesgo"""
    w_r: float

    def __post_init__(self):
        if not self.w_r > 0.0:
            raise ContractViolation(f"w_R debe ser > 0, recibido {self.w_r}")


class CollisionTable:
    """
    Celdas disjuntas de rumbo relativo precalculadas por nodo de la malla

    La malla está en el marco del sujeto; las celdas de cada nodo se guardan
    en formato CSR (ptr, cell_lo, cell_hi, cell_weight).
    """

    def __init__(self, grid: QuadratureGrid, subject: CircleCovering,
                 other: CircleCovering, weights: np.ndarray):
        self.grid = grid
        self.subject = subject
        self.other = other

        rho, phi = grid.nodes()
        self.node_x = rho * np.cos(phi)
        self.node_y = rho * np.sin(phi)
        self.area = grid.weights()

        counts = np.zeros(len(rho), dtype=np.int64)
        lo, hi, w = [], [], []
        for n, (r, p) in enumerate(zip(rho, phi)):
            partition = decompose_disjoint(heading_intervals(r, p, subject, other))
            counts[n] = partition.count
            for cell in partition.cells:
                lo.append(cell.lo)
                hi.append(cell.hi)
                w.append(cell_weight(cell.members, weights))

        self.counts = counts
        self.ptr = np.concatenate(([0], np.cumsum(counts)))
        self.cell_lo = np.asarray(lo, dtype=float)
        self.cell_hi = np.asarray(hi, dtype=float)
        self.cell_weight = np.asarray(w, dtype=float)

        logger.debug(f"Tabla de colisión {subject} / {other}: {len(rho)} nodos, "
                     f"{len(self.cell_lo)} celdas")

    @property
    def rho_max(self) -> float:
        return self.grid.rho_max


@lru_cache(maxsize=32)
def _cached_table(subject: CircleCovering, other: CircleCovering, n_rho: int, n_phi: int,
                  weights_key: Optional[Tuple[Tuple[float, ...], ...]]) -> CollisionTable:
    grid = QuadratureGrid(n_rho=n_rho, n_phi=n_phi, rho_max=radial_bound(subject, other))
    if weights_key is None:
        weights = np.ones((subject.count, other.count))
    else:
        weights = np.asarray(weights_key, dtype=float)
    return CollisionTable(grid, subject, other, weights)


def collision_table(subject: CircleCovering, other: CircleCovering, settings: RiskSettings,
                    model: SeverityModel, subject_is_ego: bool = True) -> CollisionTable:
    """Tabla de colisión (cacheada) para un par ordenado de coberturas"""
    # Valida la forma de los pesos frente a las coberturas
    if subject_is_ego:
        model.weight_matrix(subject.count, other.count, True)
    else:
        model.weight_matrix(other.count, subject.count, False)
    key = model.weights_key(subject_is_ego)
    return _cached_table(subject, other, settings.n_rho, settings.n_phi, key)


def _wrapped_interval_probability(lo: np.ndarray, hi: np.ndarray,
                                  mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """P(theta_rel en [lo, hi]) para una normal envuelta en 2pi"""
    prob = np.zeros_like(lo)
    for shift in _WRAPS:
        prob += ndtr((hi + shift - mu) / sigma) - ndtr((lo + shift - mu) / sigma)
    return prob


def risk_batch(subject_pose: np.ndarray, subject_v: np.ndarray,
               other_mean: np.ndarray, other_sigma: np.ndarray,
               table: CollisionTable, model: SeverityModel,
               settings: RiskSettings) -> np.ndarray:
    """
    Riesgo de colisión para un lote de filas

    El sujeto es determinista en subject_pose; la posición relativa
    x_s - X_o es gaussiana con la covarianza diagonal del otro. Por fila se
    integran sólo los nodos de la ventana de far_sigmas desviaciones
    alrededor de la media relativa.

    Args:
        subject_pose: (R, 3) con (x, y, theta) del sujeto
        subject_v: (R,) velocidad del sujeto
        other_mean: (R, 4) medias (x, y, theta, v) del otro
        other_sigma: (R, 4) desviaciones del otro
        table: Tabla de colisión del par (sujeto, otro)
        model: Modelo de severidad
        settings: Parámetros de cuadratura

    Returns:
        (R,) riesgos >= 0
    """
    subject_pose = np.asarray(subject_pose, dtype=float).reshape(-1, 3)
    subject_v = np.asarray(subject_v, dtype=float).reshape(-1)
    other_mean = np.asarray(other_mean, dtype=float).reshape(-1, 4)
    other_sigma = np.asarray(other_sigma, dtype=float).reshape(-1, 4)
    n_rows = len(subject_pose)
    risk = np.zeros(n_rows)
    if n_rows == 0:
        return risk

    grid = table.grid
    mx = subject_pose[:, 0] - other_mean[:, 0]
    my = subject_pose[:, 1] - other_mean[:, 1]
    rho_mean = np.hypot(mx, my)
    s_max = np.maximum(other_sigma[:, 0], other_sigma[:, 1])
    reach = settings.far_sigmas * s_max
    active = np.nonzero(rho_mean <= table.rho_max + reach)[0]
    if active.size == 0:
        return risk

    # Ventana de nodos por fila: anillos y sector angular
    rho_a = rho_mean[active]
    reach_a = reach[active]
    ring_lo = np.clip(np.floor((rho_a - reach_a) / grid.d_rho), 0, grid.n_rho - 1).astype(np.int64)
    ring_hi = np.clip(np.ceil((rho_a + reach_a) / grid.d_rho), 0, grid.n_rho - 1).astype(np.int64)
    n_rings = ring_hi - ring_lo + 1

    bearing = np.arctan2(my[active], mx[active]) - subject_pose[active, 2]
    full = rho_a <= reach_a
    with np.errstate(divide='ignore', invalid='ignore'):
        half = np.arcsin(np.clip(np.where(full, 1.0, reach_a / rho_a), 0.0, 1.0))
    j_lo = np.floor((bearing - half) / grid.d_phi - 0.5).astype(np.int64) - 1
    j_hi = np.ceil((bearing + half) / grid.d_phi - 0.5).astype(np.int64) + 1
    n_phis = np.where(full, grid.n_phi, np.minimum(j_hi - j_lo + 1, grid.n_phi))
    j_lo = np.where(full, 0, j_lo)
    counts = n_rings * n_phis

    cos_s = np.cos(subject_pose[active, 2])
    sin_s = np.sin(subject_pose[active, 2])
    sx = other_sigma[active, 0]
    sy = other_sigma[active, 1]
    mu_rel = np.mod(subject_pose[active, 2] - other_mean[active, 2], TWO_PI)
    s_theta = other_sigma[active, 2]
    norm = 1.0 / (TWO_PI * sx * sy)
    mx_a = mx[active]
    my_a = my[active]

    acc = np.zeros(active.size)
    budget = max(1, settings.chunk_cells // 4)
    bounds = np.concatenate(([0], np.cumsum(counts)))
    start = 0
    while start < active.size:
        # Bloque de filas cuyo total de nodos cabe en el presupuesto
        stop = int(np.searchsorted(bounds, bounds[start] + budget, side='right')) - 1
        stop = min(max(stop, start + 1), active.size)
        rows = np.arange(start, stop)
        c = counts[rows]
        total = int(c.sum())

        row_rep = np.repeat(rows, c)
        local = np.arange(total) - np.repeat(np.cumsum(c) - c, c)
        n_ph = n_phis[row_rep]
        ring = ring_lo[row_rep] + local // n_ph
        phi_j = np.mod(j_lo[row_rep] + local % n_ph, grid.n_phi)
        node = ring * grid.n_phi + phi_j

        lx = table.node_x[node]
        ly = table.node_y[node]
        gx = cos_s[row_rep] * lx - sin_s[row_rep] * ly
        gy = sin_s[row_rep] * lx + cos_s[row_rep] * ly
        z = ((gx - mx_a[row_rep]) / sx[row_rep]) ** 2 + ((gy - my_a[row_rep]) / sy[row_rep]) ** 2
        mass = np.exp(-0.5 * z) * norm[row_rep] * table.area[node]

        keep = (mass > settings.mass_cutoff) & (table.counts[node] > 0)
        if np.any(keep):
            node_k = node[keep]
            row_k = row_rep[keep]
            mass_k = mass[keep]
            cc = table.counts[node_k]
            starts = table.ptr[node_k]
            n_cells = int(cc.sum())
            cell = np.arange(n_cells) + np.repeat(starts - (np.cumsum(cc) - cc), cc)
            cell_row = np.repeat(row_k, cc)
            prob = _wrapped_interval_probability(table.cell_lo[cell], table.cell_hi[cell],
                                                 mu_rel[cell_row], s_theta[cell_row])
            contrib = np.repeat(mass_k, cc) * prob * table.cell_weight[cell]
            acc += np.bincount(cell_row, weights=contrib, minlength=active.size)
        start = stop

    factor = model.velocity_expectation(subject_v[active], other_mean[active, 3], other_sigma[active, 3])
    risk[active] = np.maximum(acc * factor, 0.0)
    return risk


class RiskEngine:
    """
    Evaluación de riesgos e<-o y o<-e con caché de tablas de colisión
    """

    def __init__(self, config: Optional[Dict] = None,
                 severity: Optional[SeverityModel] = None,
                 prediction_config: Optional[PredictionConfig] = None):
        """
        Inicializa el motor de riesgo

        Args:
            config: Diccionario tipo RISK_CONFIG
            severity: Modelo de severidad (energía cinética por defecto)
            prediction_config: Límites de sigma usados en las comprobaciones
        """
        self.logger = logging.getLogger(__name__)
        self.config = config or RISK_CONFIG
        self.settings = RiskSettings.from_dict(self.config)
        self.severity = severity or KineticEnergySeverity()
        self.prediction_config = prediction_config or PredictionConfig.from_dict()

    def check_sigma(self, sigma: np.ndarray):
        """Lanza ContractViolation si alguna sigma está fuera de los límites"""
        cfg = self.prediction_config
        sigma = np.asarray(sigma, dtype=float)
        lo = cfg.lower_bounds * (1.0 - 1e-12)
        hi = cfg.upper_bounds * (1.0 + 1e-12)
        if not np.all((sigma >= lo) & (sigma <= hi)):
            raise ContractViolation("Sigma fuera de los límites de acotación")

    def ego_risk_batch(self, ego_pose: np.ndarray, ego_v: np.ndarray,
                       obj_mean: np.ndarray, obj_sigma: np.ndarray,
                       ego_cov: CircleCovering, obj_cov: CircleCovering) -> np.ndarray:
        """
        R(e<-o) para formas difundibles (..., 3), (...), (..., 4), (..., 4)

        Returns:
            Riesgos con la forma de ego_v
        """
        ego_pose, ego_v, obj_mean, obj_sigma = _broadcast_rows(ego_pose, ego_v, obj_mean, obj_sigma)
        shape = ego_v.shape
        table = collision_table(ego_cov, obj_cov, self.settings, self.severity, True)
        risk = risk_batch(ego_pose.reshape(-1, 3), ego_v.reshape(-1), obj_mean.reshape(-1, 4),
                          obj_sigma.reshape(-1, 4), table, self.severity, self.settings)
        return risk.reshape(shape)

    def object_risk_batch(self, obj_pose: np.ndarray, obj_v: np.ndarray,
                          ego_mean: np.ndarray, ego_sigma: np.ndarray,
                          obj_cov: CircleCovering, ego_cov: CircleCovering) -> np.ndarray:
        """
        R(o<-e): el objeto es el sujeto en su configuración media

        Con object_view_velocity = 'object' la velocidad del sujeto y la media
        de velocidad del ego percibido son ambas la velocidad media del objeto.
        Con 'ego' el ego percibido conserva su velocidad planificada. La sigma
        de velocidad es siempre la del mapa de autorreflexión.
        """
        obj_pose, obj_v, ego_mean, ego_sigma = _broadcast_rows(obj_pose, obj_v, ego_mean, ego_sigma)
        if self.settings.object_view_velocity == 'object':
            ego_mean = ego_mean.copy()
            ego_mean[..., 3] = obj_v
        shape = obj_v.shape
        table = collision_table(obj_cov, ego_cov, self.settings, self.severity, False)
        risk = risk_batch(obj_pose.reshape(-1, 3), obj_v.reshape(-1), ego_mean.reshape(-1, 4),
                          ego_sigma.reshape(-1, 4), table, self.severity, self.settings)
        return risk.reshape(shape)

    def ego_risk(self, ego_pose: Sequence[float], v_e: float, w: UncertaintyParams,
                 ego_cov: CircleCovering, obj_cov: CircleCovering, step: int = 0) -> float:
        """
        Riesgo desde la perspectiva del ego en un paso del horizonte

        Args:
            ego_pose: (x_e, y_e, theta_e)
            v_e: Velocidad del ego
            w: Incertidumbre w(e<-o) del objeto
            ego_cov, obj_cov: Coberturas de círculos
            step: Índice del paso dentro de w

        Returns:
            R(e<-o) >= 0
        """
        mean, sigma = _step(w, step)
        self.check_sigma(sigma)
        return float(self.ego_risk_batch(np.asarray(ego_pose, dtype=float), np.asarray(v_e, dtype=float),
                                         mean, sigma, ego_cov, obj_cov))

    def object_risk(self, obj_means: Sequence[float], w: UncertaintyParams,
                    obj_cov: CircleCovering, ego_cov: CircleCovering, step: int = 0) -> float:
        """
        Riesgo desde la perspectiva de un objeto en un paso del horizonte

        Args:
            obj_means: (mu_x, mu_y, mu_theta, mu_v) del objeto
            w: Incertidumbre w(o<-e) del mapa de autorreflexión
            obj_cov, ego_cov: Coberturas de círculos
            step: Índice del paso dentro de w

        Returns:
            R(o<-e) >= 0
        """
        obj_means = np.asarray(obj_means, dtype=float)
        mean, sigma = _step(w, step)
        self.check_sigma(sigma)
        return float(self.object_risk_batch(obj_means[:3], obj_means[3], mean, sigma,
                                            obj_cov, ego_cov))

    def risk_costs(self, r_ego: np.ndarray, r_obj: np.ndarray, n_p: int) -> Tuple:
        """Costes (J_e, J_a, J_c) con los pesos y el descuento configurados"""
        return risk_costs(r_ego, r_obj, RiskCostWeights(self.settings.w_r),
                          DiscountSpec(self.settings.c_d, n_p))


def _broadcast_rows(pose, v, mean, sigma):
    pose = np.asarray(pose, dtype=float)
    v = np.asarray(v, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    lead = np.broadcast_shapes(pose.shape[:-1], v.shape, mean.shape[:-1], sigma.shape[:-1])
    return (np.broadcast_to(pose, lead + (3,)), np.broadcast_to(v, lead),
            np.broadcast_to(mean, lead + (4,)), np.broadcast_to(sigma, lead + (4,)))


def _step(w: UncertaintyParams, step: int) -> Tuple[np.ndarray, np.ndarray]:
    if w.mean.ndim != 2:
        raise ContractViolation("Se esperaba una única secuencia (H, 4) de incertidumbre")
    if not 0 <= step < w.horizon:
        raise ContractViolation(f"Paso {step} fuera del horizonte {w.horizon}")
    return w.mean[step], w.sigma[step]


def discount(m, spec: DiscountSpec):
    """
    Factor de descuento gamma(m) = (1/N_P) exp(c_d m / N_P)

    Args:
        m: Pasos hacia delante (escalar o array) en [0, N_P]
        spec: Parámetros del descuento
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0) or np.any(m_arr > spec.n_p):
        raise ContractViolation(f"m fuera de [0, {spec.n_p}]: {m}")
    gamma = np.exp(spec.c_d * m_arr / spec.n_p) / spec.n_p
    return gamma if gamma.ndim else float(gamma)


def risk_costs(r_ego: np.ndarray, r_obj: np.ndarray, weights: RiskCostWeights,
               disc: DiscountSpec, n_objects: Optional[int] = None) -> Tuple:
    """
    Costes de riesgo egoísta, altruista y colectivo

    Args:
        r_ego: R(e<-o) con forma (..., H, N_o)
        r_obj: R(o<-e) con la misma forma
        weights: Peso w_R
        disc: Descuento temporal (H <= N_P + 1)
        n_objects: N_o (por defecto el último eje)

    Returns:
        (J_e, J_a, J_c); escalares o arrays con los ejes iniciales
    """
    r_ego = np.asarray(r_ego, dtype=float)
    r_obj = np.asarray(r_obj, dtype=float)
    if r_ego.shape != r_obj.shape or r_ego.ndim < 2:
        raise ContractViolation(f"Formas incompatibles: {r_ego.shape} / {r_obj.shape}")
    n_o = r_ego.shape[-1] if n_objects is None else n_objects
    if n_o != r_ego.shape[-1]:
        raise ContractViolation(f"N_o={n_o} no coincide con la forma {r_ego.shape}")
    horizon = r_ego.shape[-2]
    if horizon > disc.n_p + 1:
        raise ContractViolation(f"Horizonte {horizon} mayor que N_P + 1 = {disc.n_p + 1}")

    lead = r_ego.shape[:-2]
    if n_o == 0:
        zero = np.zeros(lead)
        j_e, j_a = zero, zero.copy()
    else:
        gamma = discount(np.arange(horizon), disc)
        scale = weights.w_r / n_o
        j_e = scale * np.einsum('...no,n->...', r_ego, gamma)
        j_a = scale * np.einsum('...no,n->...', r_obj, gamma)
    j_c = (j_e + j_a) / 2.0
    if not lead:
        return float(j_e), float(j_a), float(j_c)
    return j_e, j_a, j_c


_DEFAULT_ENGINE: Optional[RiskEngine] = None


def _default_engine() -> RiskEngine:
    global _DEFAULT_ENGINE
    if _DEFAULT_ENGINE is None:
        _DEFAULT_ENGINE = RiskEngine()
    return _DEFAULT_ENGINE


def ego_risk(ego_pose: Sequence[float], v_e: float, w: UncertaintyParams,
             ego_cov: CircleCovering, obj_cov: CircleCovering, step: int = 0,
             engine: Optional[RiskEngine] = None) -> float:
    """R(e<-o) con el motor por defecto (ver RiskEngine.ego_risk)"""
    return (engine or _default_engine()).ego_risk(ego_pose, v_e, w, ego_cov, obj_cov, step)


def object_risk(obj_means: Sequence[float], w: UncertaintyParams,
                obj_cov: CircleCovering, ego_cov: CircleCovering, step: int = 0,
                engine: Optional[RiskEngine] = None) -> float:
    """R(o<-e) con el motor por defecto (ver RiskEngine.object_risk)"""
    return (engine or _default_engine()).object_risk(obj_means, w, obj_cov, ego_cov, step)
