"""
Excepciones del planificador de riesgo por perspectivas
"""

from typing import Optional


class RiskPlannerError(Exception):
    """Error base de la librería"""


class ScenarioParseError(RiskPlannerError):
    """El archivo de escenario no se puede leer o no sigue el esquema"""


class ScenarioValidationError(RiskPlannerError):
    """Un invariante del escenario no se cumple"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class CurveFitError(RiskPlannerError):
    """Ajuste polinómico imposible (puntos degenerados)"""


class ContractViolation(RiskPlannerError):
    """Argumentos fuera del contrato de una operación"""


class HorizonError(RiskPlannerError):
    """El horizonte de predicción sale del rango disponible"""


class ConfigError(RiskPlannerError):
    """Configuración inválida o inconsistente"""


class AggregationError(RiskPlannerError):
    """No hay datos suficientes para agregar"""
