"""
Curvas polinómicas de referencia y de contorno
Ajuste cúbico por longitud de cuerda y proyección del punto más cercano
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from src.core.exceptions import CurveFitError

ArrayLike = Union[float, np.ndarray]

# Razón áurea inversa para la búsqueda de sección dorada
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def wrap_angle(angle: ArrayLike) -> ArrayLike:
    """Envuelve un ángulo en (-pi, pi]"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def chord_length(points: np.ndarray) -> np.ndarray:
    """Longitud de cuerda acumulada de una polilínea (empieza en 0)"""
    seg = np.hypot(np.diff(points[:, 0]), np.diff(points[:, 1]))
    return np.concatenate(([0.0], np.cumsum(seg)))


@dataclass(frozen=True)
class PolynomialCurve:
    """
    Curva plana x(lam), y(lam) con polinomios cúbicos

    lam_min y lam_max delimitan el parámetro de los puntos ajustados.
    """
    px: Polynomial
    py: Polynomial
    lam_min: float
    lam_max: float

    def position(self, lam: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        """Posición (x, y) en el parámetro lam"""
        return self.px(lam), self.py(lam)

    def tangent_angle(self, lam: ArrayLike) -> ArrayLike:
        """Ángulo de la tangente theta_p(lam) en (-pi, pi]"""
        dx = self.px.deriv()(lam)
        dy = self.py.deriv()(lam)
        return np.arctan2(dy, dx)

    def sample(self, n: int = 200) -> np.ndarray:
        """Puntos equiespaciados en lam, forma (n, 2)"""
        lam = np.linspace(self.lam_min, self.lam_max, n)
        x, y = self.position(lam)
        return np.column_stack([x, y])

    def residuals(self, points: np.ndarray) -> np.ndarray:
        """Distancia de cada punto de ajuste a su imagen en la curva"""
        points = np.asarray(points, dtype=float)
        lam = chord_length(points)
        x, y = self.position(lam)
        return np.hypot(points[:, 0] - x, points[:, 1] - y)


def fit_cubic(points: Sequence[Sequence[float]]) -> PolynomialCurve:
    """
    Ajusta polinomios cúbicos x(lam), y(lam) por mínimos cuadrados

    El parámetro lam es la longitud de cuerda acumulada de los puntos.

    Args:
        points: Secuencia de (x, y), al menos 4 puntos

    Returns:
        PolynomialCurve con dominio [0, longitud total]
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise CurveFitError(f"Se esperaban puntos (x, y), forma recibida {pts.shape}")
    if len(pts) < 4:
        raise CurveFitError(f"Un ajuste cúbico necesita al menos 4 puntos, hay {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise CurveFitError("Puntos no finitos en el ajuste")

    lam = chord_length(pts)
    if lam[-1] <= 0.0:
        raise CurveFitError("Todos los puntos coinciden")
    if len(np.unique(lam)) < 4:
        raise CurveFitError("Se necesitan al menos 4 parámetros distintos para un cúbico")

    domain = [0.0, float(lam[-1])]
    px = Polynomial.fit(lam, pts[:, 0], 3, domain=domain)
    py = Polynomial.fit(lam, pts[:, 1], 3, domain=domain)

    return PolynomialCurve(px=px, py=py, lam_min=0.0, lam_max=float(lam[-1]))


def _squared_distance(curve: PolynomialCurve, lam: np.ndarray,
                      qx: np.ndarray, qy: np.ndarray,
                      qtheta: Optional[np.ndarray], heading_weight: float) -> np.ndarray:
    """Distancia de configuración al cuadrado entre consultas y curva"""
    x, y = curve.position(lam)
    d2 = (qx - x) ** 2 + (qy - y) ** 2
    if qtheta is not None and heading_weight > 0.0:
        d2 = d2 + heading_weight * wrap_angle(qtheta - curve.tangent_angle(lam)) ** 2
    return d2


def _golden_section(curve: PolynomialCurve, lo: np.ndarray, hi: np.ndarray,
                    qx: np.ndarray, qy: np.ndarray, qtheta: Optional[np.ndarray],
                    heading_weight: float, tolerance: float) -> np.ndarray:
    """Refinamiento vectorizado por sección dorada sobre cada intervalo [lo, hi]"""
    a = lo.copy()
    b = hi.copy()
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = _squared_distance(curve, c, qx, qy, qtheta, heading_weight)
    fd = _squared_distance(curve, d, qx, qy, qtheta, heading_weight)

    while np.max(b - a) > tolerance:
        left = fc <= fd
        # Mínimo en [a, d]
        b = np.where(left, d, b)
        # Mínimo en [c, b]
        a = np.where(left, a, c)
        c_new = b - _INV_PHI * (b - a)
        d_new = a + _INV_PHI * (b - a)
        c, d = c_new, d_new
        fc = _squared_distance(curve, c, qx, qy, qtheta, heading_weight)
        fd = _squared_distance(curve, d, qx, qy, qtheta, heading_weight)

    return 0.5 * (a + b)


def project_to_curve(curve: PolynomialCurve, qx: ArrayLike, qy: ArrayLike,
                     qtheta: Optional[ArrayLike] = None,
                     lam_bounds: Optional[Tuple[float, float]] = None,
                     heading_weight: float = 0.0,
                     scan_nodes: int = 512,
                     tolerance: float = 1e-4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parámetro del punto más cercano de la curva para cada consulta

    Barrido grueso en scan_nodes nodos seguido de sección dorada hasta
    |d lam| < tolerance. Los empates se resuelven hacia el lam menor.

    Args:
        curve: Curva ajustada
        qx, qy: Coordenadas de consulta (escalares o arrays de igual forma)
        qtheta: Rumbo de consulta; con heading_weight > 0 entra en la distancia
        lam_bounds: Intervalo [lam_0, lam_g] (dominio completo por defecto)
        heading_weight: Peso del término de rumbo
        scan_nodes: Nodos del barrido grueso
        tolerance: Ancho final del intervalo de refinamiento

    Returns:
        (lam, distancia al cuadrado) con la forma de las consultas
    """
    lo_b, hi_b = lam_bounds if lam_bounds is not None else (curve.lam_min, curve.lam_max)
    qx_arr = np.asarray(qx, dtype=float)
    shape = qx_arr.shape
    qx_f = qx_arr.reshape(-1)
    qy_f = np.asarray(qy, dtype=float).reshape(-1)
    qt_f = None if qtheta is None else np.asarray(qtheta, dtype=float).reshape(-1)

    nodes = np.linspace(lo_b, hi_b, scan_nodes)
    step = nodes[1] - nodes[0] if scan_nodes > 1 else 0.0
    d2 = _squared_distance(curve, nodes[None, :], qx_f[:, None], qy_f[:, None],
                           None if qt_f is None else qt_f[:, None], heading_weight)

    best = np.argmin(d2, axis=1)
    d2_best = d2[np.arange(len(qx_f)), best]
    # Primer nodo prácticamente empatado con el mínimo
    tie_tol = 1e-9 * d2_best + 1e-12
    first = np.argmax(d2 <= (d2_best + tie_tol)[:, None], axis=1)

    def refine(idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.clip(nodes[idx] - step, lo_b, hi_b)
        hi = np.clip(nodes[idx] + step, lo_b, hi_b)
        lam = _golden_section(curve, lo, hi, qx_f, qy_f, qt_f, heading_weight, tolerance)
        val = _squared_distance(curve, lam, qx_f, qy_f, qt_f, heading_weight)
        node_val = d2[np.arange(len(qx_f)), idx]
        # El nodo del barrido gana si el refinamiento no mejora
        keep_node = node_val <= val
        return np.where(keep_node, nodes[idx], lam), np.minimum(node_val, val)

    lam_best, val_best = refine(best)
    other = np.abs(first - best) > 1
    if np.any(other):
        lam_first, val_first = refine(first)
        take_first = other & (val_first <= val_best * (1.0 + 1e-9) + 1e-12)
        lam_best = np.where(take_first, lam_first, lam_best)
        val_best = np.where(take_first, val_first, val_best)

    return lam_best.reshape(shape), val_best.reshape(shape)
