"""
Geometría de colisión con coberturas de múltiples círculos
Transformada polar, cota radial, intervalos de rumbo relativo y su
descomposición en celdas disjuntas
"""

from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import GEOMETRY_CONFIG
from src.core.exceptions import ContractViolation

TWO_PI = 2.0 * np.pi

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class CircleCovering:
    """
    Huella de un actor aproximada por círculos equidistantes

    Los centros están sobre el eje longitudinal, centrados en el punto de
    referencia, con desplazamientos d * (j - (N_c + 1) / 2), j = 1..N_c.
    """
    radius: float
    spacing: float = 0.0
    count: int = 1

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ContractViolation(f"radius debe ser > 0, recibido {self.radius}")
        if self.spacing < 0.0:
            raise ContractViolation(f"spacing debe ser >= 0, recibido {self.spacing}")
        if int(self.count) != self.count or self.count < 1:
            raise ContractViolation(f"count debe ser un entero >= 1, recibido {self.count}")

    @property
    def offsets(self) -> np.ndarray:
        """Desplazamientos longitudinales de los centros (m)"""
        if self.count == 1:
            return np.zeros(1)
        j = np.arange(1, self.count + 1, dtype=float)
        return self.spacing * (j - (self.count + 1) / 2.0)

    @property
    def half_length(self) -> float:
        """Distancia del punto de referencia al centro más alejado"""
        if self.count == 1:
            return 0.0
        return 0.5 * self.spacing * (self.count - 1)

    def to_dict(self) -> dict:
        return {'radius': float(self.radius), 'spacing': float(self.spacing),
                'count': int(self.count)}


@dataclass(frozen=True)
class HeadingInterval:
    """Arco de rumbo relativo [lo, hi] en el que colisiona el par (j, l)"""
    j: int
    l: int
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass
class HeadingIntervalSet:
    """Intervalos de colisión de todos los pares de círculos, en [0, 2pi)"""
    items: List[HeadingInterval] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def is_empty(self) -> bool:
        return not self.items

    def contains(self, theta: ArrayLike) -> ArrayLike:
        """Pertenencia de theta (envuelto a [0, 2pi)) a la unión"""
        t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        inside = np.zeros(t.shape, dtype=bool)
        for item in self.items:
            inside |= (t >= item.lo) & (t <= item.hi)
        return inside if inside.ndim else bool(inside)

    def union_length(self) -> float:
        """Medida de la unión de los intervalos"""
        if not self.items:
            return 0.0
        spans = sorted((it.lo, it.hi) for it in self.items)
        total = 0.0
        cur_lo, cur_hi = spans[0]
        for lo, hi in spans[1:]:
            if lo > cur_hi:
                total += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        return total + (cur_hi - cur_lo)


@dataclass(frozen=True)
class SeverityCell:
    """Celda disjunta con los pares de círculos que la cubren"""
    lo: float
    hi: float
    members: FrozenSet[Tuple[int, int]]

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass
class DisjointSeverityPartition:
    """Partición de la unión de intervalos en celdas disjuntas"""
    cells: List[SeverityCell] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.cells)

    def total_length(self) -> float:
        return float(sum(cell.length for cell in self.cells))


def to_polar(ego_pos: Sequence[float], obj_pos: Sequence[float]) -> Tuple[float, float]:
    """
    Posición del ego relativa al objeto en coordenadas polares

    Args:
        ego_pos: (x_e, y_e)
        obj_pos: (x_o, y_o)

    Returns:
        (rho, phi) con phi en [0, 2pi); rho = 0 da phi = 0
    """
    dx = float(ego_pos[0]) - float(obj_pos[0])
    dy = float(ego_pos[1]) - float(obj_pos[1])
    rho = float(np.hypot(dx, dy))
    if rho == 0.0:
        return 0.0, 0.0
    phi = float(np.mod(np.arctan2(dy, dx), TWO_PI))
    # mod puede devolver 2pi exacto para ángulos negativos diminutos
    if phi >= TWO_PI:
        phi = 0.0
    return rho, phi


def radial_bound(ego: CircleCovering, obj: CircleCovering) -> float:
    """Distancia máxima entre puntos de referencia con solape posible"""
    return (ego.radius + obj.radius
            + 0.5 * obj.spacing * (obj.count - 1)
            + 0.5 * ego.spacing * (ego.count - 1))


def pair_arcs(rho: ArrayLike, phi: ArrayLike, a: ArrayLike, b: ArrayLike,
              reach: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Arco de rumbo relativo en forma cerrada para un par de círculos

    El sujeto mira a +x y está en rho * u(phi) respecto al otro; su círculo
    está desplazado a sobre su eje y el del otro b sobre el eje del otro,
    que forma el ángulo -theta_rel. Hay solape si |c - b u(-theta_rel)| <= reach
    con c = rho u(phi) + a e_x. Todas las entradas se difunden (broadcast).

    Returns:
        (full, empty, center, half): arco [center - half, center + half] en
        theta_rel cuando ni full ni empty
    """
    rho, phi, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rho, phi, a, b)))
    cx = rho * np.cos(phi) + a
    cy = rho * np.sin(phi)
    norm_c = np.hypot(cx, cy)
    abs_b = np.abs(b)

    degenerate = (abs_b == 0.0) | (norm_c == 0.0)
    # Con b = 0 o c = 0 la distancia no depende del rumbo
    degenerate_hit = np.where(abs_b == 0.0, norm_c <= reach, abs_b <= reach)

    with np.errstate(divide='ignore', invalid='ignore'):
        kappa = (norm_c ** 2 + abs_b ** 2 - reach ** 2) / (2.0 * abs_b * norm_c)
    alpha = np.arctan2(cy, cx)
    alpha = np.where(b < 0.0, alpha + np.pi, alpha)

    full = np.where(degenerate, degenerate_hit, kappa <= -1.0)
    empty = np.where(degenerate, ~degenerate_hit, kappa > 1.0)
    half = np.arccos(np.clip(np.where(degenerate, 1.0, kappa), -1.0, 1.0))
    center = -alpha
    return full, empty, center, half


def _normalized_spans(center: float, half: float) -> List[Tuple[float, float]]:
    """Arco [center - half, center + half] en [0, 2pi), partido en 2pi"""
    lo = float(np.mod(center - half, TWO_PI))
    if lo >= TWO_PI:
        lo = 0.0
    hi = lo + 2.0 * half
    if hi <= TWO_PI:
        return [(lo, hi)]
    return [(lo, TWO_PI), (0.0, hi - TWO_PI)]


def heading_intervals(rho: float, phi: float, ego: CircleCovering,
                      obj: CircleCovering) -> HeadingIntervalSet:
    """
    Intervalos de rumbo relativo con solape para cada par de círculos

    phi es el rumbo de la posición del sujeto vista desde el otro, medido en
    el marco del sujeto (sujeto orientado a +x).

    Args:
        rho: Distancia entre puntos de referencia (m)
        phi: Ángulo polar en el marco del sujeto (rad)
        ego: Cobertura del sujeto (índice j)
        obj: Cobertura del otro (índice l)

    Returns:
        HeadingIntervalSet con índices 1-based
    """
    if rho < 0.0:
        raise ContractViolation(f"rho debe ser >= 0, recibido {rho}")
    result = HeadingIntervalSet()
    if rho > radial_bound(ego, obj):
        return result

    reach = ego.radius + obj.radius
    a = ego.offsets[:, None]
    b = obj.offsets[None, :]
    full, empty, center, half = pair_arcs(rho, phi, a, b, reach)

    for j in range(ego.count):
        for l in range(obj.count):
            if empty[j, l]:
                continue
            if full[j, l]:
                result.items.append(HeadingInterval(j + 1, l + 1, 0.0, TWO_PI))
                continue
            for lo, hi in _normalized_spans(center[j, l], half[j, l]):
                result.items.append(HeadingInterval(j + 1, l + 1, lo, hi))
    return result


def decompose_disjoint(interval_set: HeadingIntervalSet,
                       tolerance: Optional[float] = None) -> DisjointSeverityPartition:
    """
    Descompone la unión de intervalos en celdas disjuntas maximales

    Barrido por extremos ordenados: cada segmento entre extremos consecutivos
    recibe los pares cuyo intervalo cubre su punto medio. Segmentos vecinos
    con los mismos pares se fusionan.

    Args:
        interval_set: Intervalos normalizados
        tolerance: Tolerancia de extremos (GEOMETRY_CONFIG por defecto)

    Returns:
        DisjointSeverityPartition
    """
    tol = GEOMETRY_CONFIG['endpoint_tolerance'] if tolerance is None else tolerance
    items = interval_set.items
    if not items:
        return DisjointSeverityPartition()

    los = np.array([it.lo for it in items])
    his = np.array([it.hi for it in items])
    pairs = [(it.j, it.l) for it in items]

    endpoints = np.unique(np.concatenate([los, his]))
    # Extremos separados menos que la tolerancia son el mismo
    keep = np.concatenate(([True], np.diff(endpoints) > tol))
    endpoints = endpoints[keep]

    cells: List[SeverityCell] = []
    for seg_lo, seg_hi in zip(endpoints[:-1], endpoints[1:]):
        mid = 0.5 * (seg_lo + seg_hi)
        covering = np.nonzero((los <= mid) & (his >= mid))[0]
        if covering.size == 0:
            continue
        members = frozenset(pairs[i] for i in covering)
        last = cells[-1] if cells else None
        if last is not None and last.members == members and abs(last.hi - seg_lo) <= tol:
            cells[-1] = SeverityCell(last.lo, float(seg_hi), members)
        else:
            cells.append(SeverityCell(float(seg_lo), float(seg_hi), members))

    return DisjointSeverityPartition(cells)


def circle_gap(xa: ArrayLike, ya: ArrayLike, tha: ArrayLike, cov_a: CircleCovering,
               xb: ArrayLike, yb: ArrayLike, thb: ArrayLike, cov_b: CircleCovering) -> np.ndarray:
    """
    Holgura mínima entre dos coberturas (negativa o cero si se solapan)

    Las poses se difunden entre sí; el resultado tiene la forma difundida.
    """
    xa, ya, tha, xb, yb, thb = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (xa, ya, tha, xb, yb, thb)))
    oa = cov_a.offsets
    ob = cov_b.offsets
    ax = xa[..., None, None] + oa[:, None] * np.cos(tha)[..., None, None]
    ay = ya[..., None, None] + oa[:, None] * np.sin(tha)[..., None, None]
    bx = xb[..., None, None] + ob[None, :] * np.cos(thb)[..., None, None]
    by = yb[..., None, None] + ob[None, :] * np.sin(thb)[..., None, None]
    dist = np.hypot(ax - bx, ay - by)
    return dist.min(axis=(-2, -1)) - (cov_a.radius + cov_b.radius)


def circles_overlap(pose_a: Sequence[float], cov_a: CircleCovering,
                    pose_b: Sequence[float], cov_b: CircleCovering) -> bool:
    """Comprobación directa de solape entre dos actores en poses (x, y, theta)"""
    gap = circle_gap(pose_a[0], pose_a[1], pose_a[2], cov_a,
                     pose_b[0], pose_b[1], pose_b[2], cov_b)
    return bool(gap <= 0.0)


def relative_overlap(rho: ArrayLike, phi: ArrayLike, theta_rel: ArrayLike,
                     subject: CircleCovering, other: CircleCovering) -> np.ndarray:
    """
    Solape directo en la pose relativa (rho, phi, theta_rel)

    El otro está en el origen con rumbo -theta_rel; el sujeto en
    rho * u(phi) con rumbo 0.
    """
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta_rel = np.asarray(theta_rel, dtype=float)
    return circle_gap(rho * np.cos(phi), rho * np.sin(phi), 0.0, subject,
                      0.0, 0.0, -theta_rel, other) <= 0.0
