"""
Línea de comandos del planificador de riesgo por perspectivas

Uso:
    python -m src.cli simulate --scenario tjunction_01 --perspective collective --a moderate
    python -m src.cli campaign --scenario 'scenarios/*.yaml' --jobs 4 --out runs
    python -m src.cli report --out runs
    python -m src.cli validate --scenario 'scenarios/*.yaml'
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from config.loader import load_config
from src.core.campaign import CampaignSpec, build_report, run_campaign, write_run
from src.core.exceptions import (AggregationError, ConfigError, RiskPlannerError,
                                 ScenarioParseError, ScenarioValidationError)
from src.core.feedback_loop import RunConfig, run_scenario
from src.scenario.scenario_model import list_scenarios, load_scenario, resolve_scenario_path

# Códigos de salida
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID = 4
EXIT_NO_TRACES = 5

PERSPECTIVES = ['egoistic', 'altruistic', 'collective']
A_LEVEL_NAMES = ['low', 'moderate', 'high']

logger = logging.getLogger('src.cli')


def setup_logging(config: Dict, verbose: bool = False):
    """Configura logging desde la sección logging"""
    level = logging.DEBUG if verbose else getattr(logging, str(config.get('level', 'INFO')).upper(),
                                                  logging.INFO)
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.get('log_to_file'):
        handlers.append(logging.FileHandler(config.get('log_file', 'riskplan.log')))
    logging.basicConfig(level=level, format=config.get('log_format'), handlers=handlers, force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='python -m src.cli',
        description='Planificación SMPC con riesgo egoísta, altruista o colectivo')
    parser.add_argument('--config', help='Archivo YAML de configuración (o RISKPLAN_CONFIG)')
    parser.add_argument('--verbose', '-v', action='store_true', help='Log en nivel DEBUG')
    sub = parser.add_subparsers(dest='command', required=True)

    simulate = sub.add_parser('simulate', help='Simula un escenario')
    simulate.add_argument('--scenario', required=True, help='Nombre del corpus o ruta YAML')
    simulate.add_argument('--perspective', choices=PERSPECTIVES)
    simulate.add_argument('--a', dest='a_level', choices=A_LEVEL_NAMES)
    simulate.add_argument('--seed', type=int)
    simulate.add_argument('--out', help='Directorio de salida')

    campaign = sub.add_parser('campaign', help='Rejilla perspectiva x nivel sobre varios escenarios')
    campaign.add_argument('--scenario', action='append', dest='scenarios',
                          help='Nombre, ruta o glob (repetible)')
    campaign.add_argument('--perspective', action='append', dest='perspectives', choices=PERSPECTIVES)
    campaign.add_argument('--a', action='append', dest='a_levels', choices=A_LEVEL_NAMES)
    campaign.add_argument('--seed', type=int)
    campaign.add_argument('--jobs', type=int)
    campaign.add_argument('--out')

    report = sub.add_parser('report', help='Reagrega trazas existentes')
    report.add_argument('--out', help='Directorio con las trazas')

    validate = sub.add_parser('validate', help='Comprueba archivos de escenario')
    validate.add_argument('--scenario', action='append', dest='scenarios', required=True,
                          help='Nombre, ruta o glob (repetible)')
    return parser


def _out_dir(args: argparse.Namespace, config: Dict) -> str:
    return args.out or config['campaign']['out']


def cmd_simulate(args: argparse.Namespace, config: Dict) -> int:
    path = resolve_scenario_path(args.scenario)
    scenario = load_scenario(path)
    run_config = RunConfig.from_config(config, perspective=args.perspective,
                                       a_level=args.a_level, seed=args.seed)
    trace = run_scenario(scenario, run_config)
    directory = write_run(_out_dir(args, config), trace, config, path)
    print(os.path.join(directory, 'trace.csv'))
    return EXIT_OK


def cmd_campaign(args: argparse.Namespace, config: Dict) -> int:
    spec = CampaignSpec.from_config(config, scenarios=args.scenarios,
                                    perspectives=args.perspectives, a_levels=args.a_levels,
                                    seed=args.seed, jobs=args.jobs, out=args.out)
    report = run_campaign(spec)
    print(os.path.join(spec.out, 'report.json'))
    if report.failed_runs:
        print(f"error: {len(report.failed_runs)} ejecuciones fallidas: {', '.join(report.failed_runs)}",
              file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: Dict) -> int:
    out = _out_dir(args, config)
    report = build_report(out, config['campaign'].get('histogram_bins'))
    logger.info(f"{len(report.cases)} casos agregados")
    print(os.path.join(out, 'report.json'))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, config: Dict) -> int:
    paths = list_scenarios(args.scenarios)
    if not paths:
        raise FileNotFoundError(f"Ningún escenario coincide con {args.scenarios}")
    invalid = 0
    for path in paths:
        try:
            scenario = load_scenario(path)
            print(f"OK      {path} ({scenario.id}, {scenario.n_objects} objetos)")
        except (ScenarioParseError, ScenarioValidationError) as e:
            invalid += 1
            field = getattr(e, 'field', None)
            print(f"INVALID {path}: {e}" + (f" [{field}]" if field else ''))
    return EXIT_INVALID if invalid else EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'campaign': cmd_campaign,
    'report': cmd_report,
    'validate': cmd_validate,
}


def run(argv: Optional[List[str]] = None) -> int:
    """
    Ejecuta la línea de comandos

    Args:
        argv: Argumentos (sys.argv[1:] por defecto)

    Returns:
        Código de salida
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        config = load_config(args.config)
        setup_logging(config['logging'], args.verbose)
        return COMMANDS[args.command](args, config)
    except FileNotFoundError as e:
        print(f"error: archivo no encontrado: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except AggregationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_TRACES
    except (ConfigError, ScenarioParseError, ScenarioValidationError) as e:
        print(f"error: configuración o escenario inválido: {e}", file=sys.stderr)
        return EXIT_INVALID
    except RiskPlannerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("error: interrumpido", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"Error inesperado: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
