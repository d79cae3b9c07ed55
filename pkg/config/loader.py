"""
Carga de configuración de ejecución
Fusiona un archivo YAML opcional sobre los diccionarios de config.settings
"""

import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from config import settings
from src.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

# Sección del archivo YAML -> diccionario por defecto
SECTIONS = {
    'scenario': 'SCENARIO_CONFIG',
    'geometry': 'GEOMETRY_CONFIG',
    'prediction': 'PREDICTION_CONFIG',
    'risk': 'RISK_CONFIG',
    'planner': 'PLANNER_CONFIG',
    'simulation': 'SIMULATION_CONFIG',
    'campaign': 'CAMPAIGN_CONFIG',
    'logging': 'LOGGING_CONFIG',
    'a_levels': 'A_LEVELS',
}


def default_config() -> Dict[str, Dict[str, Any]]:
    """Copia profunda de todos los diccionarios por defecto, por sección"""
    return {section: copy.deepcopy(getattr(settings, name))
            for section, name in SECTIONS.items()}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    Fusiona override sobre base (recursivo en diccionarios anidados)

    Args:
        base: Diccionario de partida (no se modifica)
        override: Valores que ganan en caso de conflicto

    Returns:
        Nuevo diccionario fusionado
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config_path(path: Optional[str] = None) -> Optional[str]:
    """
    Determina el archivo de configuración a usar

    El argumento explícito gana; si no hay, se consulta RISKPLAN_CONFIG
    (también desde un .env en el directorio de trabajo).
    """
    if path:
        return path
    load_dotenv()
    return os.environ.get(settings.CONFIG_ENV_VAR) or None


def load_config(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """
    Carga la configuración completa de una ejecución

    Args:
        path: Archivo YAML (None = variable de entorno o sólo valores por defecto)

    Returns:
        Diccionario por sección con los valores resueltos
    """
    config = default_config()
    path = resolve_config_path(path)
    if path is None:
        return config

    if not os.path.isfile(path):
        raise FileNotFoundError(path)

    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Archivo de configuración ilegible {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"El archivo de configuración {path} debe ser un mapeo")

    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Secciones desconocidas en {path}: {', '.join(unknown)}")

    for section, values in data.items():
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"La sección '{section}' debe ser un mapeo")
        config[section] = deep_merge(config[section], values)

    logger.info(f"Configuración cargada desde {path}")
    return config
