"""
Configuración del planificador de riesgo por perspectivas
Todos los valores están en unidades SI (m, s, rad, m/s)
"""

import os

# ============================================================================
# RUTAS
# ============================================================================

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Corpus de escenarios incluido en el repositorio
SCENARIO_DIR = os.path.join(PROJECT_ROOT, 'scenarios')

# Variable de entorno con el archivo de configuración por defecto
CONFIG_ENV_VAR = 'RISKPLAN_CONFIG'

# ============================================================================
# ESCENARIOS
# ============================================================================

SCENARIO_CONFIG = {
    # Versiones del formato que el cargador acepta
    'supported_versions': [1],
    'file_extensions': ['.yaml', '.yml'],

    # Tolerancia para detectar waypoints duplicados
    'duplicate_tolerance': 1e-9,
}

# ============================================================================
# GEOMETRÍA
# ============================================================================

GEOMETRY_CONFIG = {
    # Tolerancia de extremos al descomponer intervalos
    'endpoint_tolerance': 1e-12,
}

# ============================================================================
# PREDICCIÓN
# ============================================================================

PREDICTION_CONFIG = {
    # Incertidumbre inicial y crecimiento lineal por paso (m)
    'sigma_0': (0.1, 0.1),
    'q': (0.05, 0.05),

    # Límite de aceleración para el cambio a la rama de estado actual (m/s^2)
    'accel_limit': 8.0,

    # Límites de sigma por componente
    'sigma_min': {'position': 0.05, 'heading': 0.01, 'velocity': 0.05},
    'sigma_max': {'position': 5.0, 'heading': 1.0, 'velocity': 5.0},

    # Umbral de giro para el límite en línea recta (rad/s)
    'straight_turn_rate': 1e-6,

    # Propagación de momentos: 'corrected' o 'literal'
    'propagation_mode': 'corrected',
}

# Factores de escala de la incertidumbre que los objetos tienen sobre el ego
A_LEVELS = {
    'low': 0.5,
    'moderate': 1.0,
    'high': 2.0,
}

# ============================================================================
# RIESGO
# ============================================================================

RISK_CONFIG = {
    # Malla de cuadratura polar (regla del punto medio)
    'n_rho': 48,
    'n_phi': 96,

    # Peso del coste de riesgo y descuento temporal
    'w_r': 0.1,
    'c_d': 0.5,

    # Masa mínima de un nodo para integrar su intervalo de rumbo
    'mass_cutoff': 1e-13,

    # Distancia (en sigmas) a partir de la cual el riesgo se toma como cero
    'far_sigmas': 8.0,

    # Máximo de celdas expandidas por bloque de evaluación
    'chunk_cells': 2_000_000,

    # Velocidad media del ego visto por el objeto: 'object' (la del objeto)
    # o 'ego' (la planificada)
    'object_view_velocity': 'object',
}

# ============================================================================
# PLANIFICADOR
# ============================================================================

PLANNER_CONFIG = {
    # Horizonte y periodo de muestreo
    'n_p': 20,
    'dt': 0.1,

    # Peso de error de referencia (x, y, theta, v)
    'w': [[0.5, 0.0, 0.0, 0.0],
          [0.0, 0.5, 0.0, 0.0],
          [0.0, 0.0, 1.0, 0.0],
          [0.0, 0.0, 0.0, 0.2]],

    # Peso del esfuerzo de control (dv, dtheta)
    'w_ctrl': [[0.1, 0.0],
               [0.0, 5.0]],

    # Campo potencial artificial
    'w_apf': 1.0,
    'apf': {
        'a_road': 1.0,
        'epsilon': 0.5,
        'a_lane': 1.0,
        'sigma_lane': 0.5,
        'scan_nodes': 128,
    },

    # Conjunto de entradas U = [0, v_max] x [-dtheta_max, dtheta_max]
    'v_max': 20.0,
    'dtheta_max': 0.1,

    # Conjunto de estados Q (caja en x, y)
    'state_bounds': {
        'x': (-1.0e4, 1.0e4),
        'y': (-1.0e4, 1.0e4),
    },
    'state_penalty': 1.0e6,

    # Proyección sobre la trayectoria de referencia
    'progress': {
        'scan_nodes': 512,
        'tolerance': 1e-4,
    },

    # Optimizador de entropía cruzada
    'optimizer': {
        'n_samples': 256,
        'n_elite': 32,
        'n_iters': 6,
        'init_sigma_u': (2.0, 0.05),
        'seed': 0,
    },
}

# ============================================================================
# SIMULACIÓN
# ============================================================================

SIMULATION_CONFIG = {
    # Perspectiva y nivel de incertidumbre por defecto
    'perspective': 'collective',
    'a_level': 'moderate',
    'seed': 0,

    # Intervalo de log durante la simulación (pasos)
    'log_interval': 10,
}

# ============================================================================
# CAMPAÑA
# ============================================================================

CAMPAIGN_CONFIG = {
    'scenarios': [os.path.join(SCENARIO_DIR, '*.yaml')],
    'perspectives': ['egoistic', 'altruistic', 'collective'],
    'a_levels': ['low', 'moderate', 'high'],
    'seed': 0,
    'jobs': 1,
    'out': 'runs',

    # Número de barras de los histogramas del informe
    'histogram_bins': 18,
}

# ============================================================================
# LOGGING
# ============================================================================

LOGGING_CONFIG = {
    'level': 'INFO',  # DEBUG, INFO, WARNING, ERROR
    'log_to_file': False,
    'log_file': 'riskplan.log',
    'log_format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
}
