"""
Modelos de severidad de colisión
"""

from abc import ABC, abstractmethod
from typing import Iterable, Optional, Tuple

import numpy as np

from src.core.exceptions import ContractViolation
from src.geometry.collision_geometry import SeverityCell


class SeverityModel(ABC):
    """
    Severidad separable: peso por par de círculos por un término de velocidad

    pair_weights se indexa (círculo del ego, círculo del objeto). Cuando el
    sujeto es el objeto se usa la traspuesta.
    """

    def __init__(self, pair_weights: Optional[np.ndarray] = None):
        if pair_weights is not None:
            pair_weights = np.asarray(pair_weights, dtype=float)
            if pair_weights.ndim != 2 or np.any(pair_weights < 0.0):
                raise ContractViolation("pair_weights debe ser una matriz de pesos >= 0")
        self.pair_weights = pair_weights

    def weight_matrix(self, n_ego: int, n_obj: int, subject_is_ego: bool = True) -> np.ndarray:
        """Pesos w_{j,l} orientados como (sujeto, otro)"""
        if self.pair_weights is None:
            weights = np.ones((n_ego, n_obj))
        else:
            if self.pair_weights.shape != (n_ego, n_obj):
                raise ContractViolation(
                    f"pair_weights tiene forma {self.pair_weights.shape}, se esperaba {(n_ego, n_obj)}")
            weights = self.pair_weights
        return weights if subject_is_ego else weights.T

    def weights_key(self, subject_is_ego: bool = True) -> Optional[Tuple[Tuple[float, ...], ...]]:
        """Clave hashable de los pesos orientados (para la caché de tablas)"""
        if self.pair_weights is None:
            return None
        weights = self.pair_weights if subject_is_ego else self.pair_weights.T
        return tuple(tuple(float(w) for w in row) for row in weights)

    @abstractmethod
    def velocity_expectation(self, v_subject, mu_v, sigma_v):
        """E[f(v_subject, V)] con V ~ N(mu_v, sigma_v^2)"""

    def pair_expectation(self, weight: float, v_subject, mu_v, sigma_v):
        """E[s_{j,l}(v_subject, V)] para un par de peso dado"""
        return weight * self.velocity_expectation(v_subject, mu_v, sigma_v)


class KineticEnergySeverity(SeverityModel):
    """s_{j,l}(v_s, v_o) = 1/2 w_{j,l} (v_s^2 + v_o^2), independiente del rumbo"""

    def velocity_expectation(self, v_subject, mu_v, sigma_v):
        v_subject = np.asarray(v_subject, dtype=float)
        mu_v = np.asarray(mu_v, dtype=float)
        sigma_v = np.asarray(sigma_v, dtype=float)
        return 0.5 * (v_subject ** 2 + mu_v ** 2 + sigma_v ** 2)


def cell_weight(members: Iterable[Tuple[int, int]], weights: np.ndarray) -> float:
    """Peso medio de los pares (1-based) de una celda"""
    members = list(members)
    if not members:
        raise ContractViolation("La celda no tiene pares")
    return float(np.mean([weights[j - 1, l - 1] for j, l in members]))


def expected_severity(cell: SeverityCell, v_subject: float, v_other: Tuple[float, float],
                      model: Optional[SeverityModel] = None,
                      weights: Optional[np.ndarray] = None) -> float:
    """
    Severidad esperada de una celda: media sobre sus pares

    Args:
        cell: Celda disjunta con al menos un par
        v_subject: Velocidad del sujeto (m/s)
        v_other: (mu_v, sigma_v) de la velocidad del otro
        model: Modelo de severidad (energía cinética por defecto)
        weights: Pesos orientados (sujeto, otro); por defecto los del modelo

    Returns:
        Severidad esperada >= 0
    """
    model = model or KineticEnergySeverity()
    if weights is None:
        n_subject = max(j for j, _ in cell.members)
        n_other = max(l for _, l in cell.members)
        if model.pair_weights is not None:
            n_subject, n_other = model.pair_weights.shape
        weights = model.weight_matrix(n_subject, n_other)
    mu_v, sigma_v = v_other
    return float(model.pair_expectation(cell_weight(cell.members, weights), v_subject, mu_v, sigma_v))
