"""
Command-line runner: one subcommand per experiment plus info, check-config and settings

    python -m qdesk trotter-scaling --config runs/trotter.cfg --seed 7 --out results/trotter
    python -m qdesk check-config h2-energy --config runs/h2.cfg
    python -m qdesk info
    python -m qdesk settings --set threads=4 --set log_level=DEBUG

Exit status is 0 when every in-run check passes, 1 on failed checks or an
unexpected error, 2 on configuration, missing-file or output-directory errors.
"""
import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy
from pydantic import ValidationError

from . import __version__
from .config import ConfigError, get_project_root, get_settings, read_experiment_file, update_settings
from .experiments import EXPERIMENTS, SCHEMA_VERSION, ExperimentContext
from .logging_config import run_log, setup_logging
from .models import ExperimentConfig, ExperimentParams, ExperimentResult, Provenance, RunSummary
from .parallel import EnsembleRunner, ResourceManager
from .utils import ensure_output_dir, format_duration, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.json"
PROVENANCE_FILE = "provenance.json"

_logging_ready = False


def _configure_logging(log_level: Optional[str] = None):
    """Set up logging on first use; later calls only adjust the level"""
    global _logging_ready
    settings = get_settings()
    level = (log_level or settings.log_level).upper()
    if _logging_ready:
        logging.getLogger().setLevel(getattr(logging, level, logging.INFO))
        return
    log_dir = Path(settings.log_dir)
    if not log_dir.is_absolute():
        log_dir = get_project_root() / log_dir
    setup_logging(str(log_dir), level)
    _logging_ready = True


def _error_key(error: dict) -> str:
    return ".".join(str(part) for part in error.get('loc', ())) or "<root>"


def _config_error_from(e: ValidationError, section: str) -> ConfigError:
    """Unknown keys are listed together; otherwise the first failing key is named"""
    errors = e.errors()
    unknown = [_error_key(err) for err in errors if err.get('type') == 'extra_forbidden']
    if unknown:
        return ConfigError(f"Unknown keys in [{section}]: {', '.join(sorted(unknown))}", key=sorted(unknown)[0])
    first = errors[0]
    key = _error_key(first)
    return ConfigError(f"Invalid value for '{key}': {first.get('msg')} (got {first.get('input')!r})", key=key)


def validate_config(experiment: str, path=None, seed: Optional[int] = None, threads: Optional[int] = None,
                    out: Optional[str] = None) -> Tuple[ExperimentConfig, ExperimentParams]:
    """
    Load, merge and validate the configuration of one run

    Precedence: explicit arguments (command-line flags), then the [run] table
    of the config file, then toolkit settings and defaults.

    Args:
        experiment: Experiment name
        path: Optional config file
        seed, threads, out: Command-line overrides

    Returns:
        (normalized ExperimentConfig, validated parameter model)

    Raises:
        ConfigError: Unknown experiment, parse error, unknown key or out-of-range value
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment '{experiment}' (expected one of {', '.join(EXPERIMENTS)})")
    run, raw_params = read_experiment_file(path) if path is not None else ({}, {})

    params_model, _ = EXPERIMENTS[experiment]
    try:
        params = params_model(**raw_params)
    except ValidationError as e:
        raise _config_error_from(e, "params") from e

    settings = get_settings()
    merged = {
        'seed': seed if seed is not None else run.get('seed', 0),
        'threads': threads if threads is not None else run.get('threads', settings.threads or 1),
        'out_dir': str(out if out is not None else run.get('out', Path(settings.results_dir) / experiment)),
    }
    try:
        config = ExperimentConfig(experiment=experiment, params=params.model_dump(mode='json'), **merged)
    except ValidationError as e:
        raise _config_error_from(e, "run") from e
    return config, params


def config_echo(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        'experiment': config.experiment,
        'run': {'seed': config.seed, 'threads': config.threads, 'out': config.out_dir},
        'params': config.params,
    }


def write_artifacts(out_dir: Path, config: ExperimentConfig, result: ExperimentResult):
    """Results CSV, extra tables, summary and provenance; called from the main thread only"""
    write_csv(out_dir / RESULTS_FILE, result.columns, result.rows)
    for name, (columns, rows) in sorted(result.tables.items()):
        write_csv(out_dir / f"{name}.csv", columns, rows)

    summary = RunSummary(
        experiment=config.experiment,
        toolkit_version=__version__,
        seed=config.seed,
        threads=config.threads,
        params=config.params,
        schema_version=SCHEMA_VERSION,
        columns=result.columns,
        metrics=result.metrics,
        checks=result.checks,
        passed=result.passed,
    )
    write_json(out_dir / SUMMARY_FILE, summary.model_dump())

    provenance = Provenance(
        toolkit_version=__version__,
        experiment=config.experiment,
        seed=config.seed,
        threads=config.threads,
        python_version=platform.python_version(),
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
    )
    write_json(out_dir / PROVENANCE_FILE, provenance.model_dump(mode='json'))


def run(config: ExperimentConfig, params: Optional[ExperimentParams] = None) -> int:
    """
    Run one experiment and write its artifacts

    Returns:
        Exit status (0 passed, 1 failed checks or unexpected error, 2 config/file errors)
    """
    if config.experiment not in EXPERIMENTS:
        logger.error(f"Unknown experiment '{config.experiment}'")
        return EXIT_CONFIG
    params_model, body = EXPERIMENTS[config.experiment]
    try:
        params = params or params_model(**config.params)
    except ValidationError as e:
        logger.error(str(_config_error_from(e, "params")))
        return EXIT_CONFIG

    try:
        out_dir = ensure_output_dir(config.out_dir)
    except PermissionError as e:
        logger.error(str(e))
        return EXIT_CONFIG

    with run_log(out_dir):
        return _execute(config, params, body, out_dir)


def _execute(config: ExperimentConfig, params: ExperimentParams, body, out_dir: Path) -> int:
    logger.info(f"Running {config.experiment} (seed={config.seed}, threads={config.threads}) -> {out_dir}")
    started = time.time()
    ctx = ExperimentContext(config.seed, config.threads, EnsembleRunner(max_workers=config.threads))
    try:
        result = body(params, ctx)
    except FileNotFoundError as e:
        logger.error(f"Missing input file: {e.filename or e}")
        return EXIT_CONFIG
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except Exception as e:
        logger.exception(f"{config.experiment} failed: {e}")
        return EXIT_FAILED

    write_artifacts(out_dir, config, result)
    failed = [name for name, ok in result.checks.items() if not ok]
    elapsed = format_duration(time.time() - started)
    if failed:
        logger.warning(f"{config.experiment} finished in {elapsed} with failed checks: {', '.join(failed)}")
        return EXIT_FAILED
    logger.info(f"{config.experiment} passed {len(result.checks)} checks in {elapsed}")
    return EXIT_OK


def _info() -> Dict[str, Any]:
    return {
        'toolkit_version': __version__,
        'experiments': list(EXPERIMENTS),
        'resources': ResourceManager.snapshot(),
        'settings': get_settings().model_dump(),
    }


def _settings_command(assignments: List[str]) -> int:
    parsed = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            logger.error(f"Expected KEY=VALUE, got {item!r}")
            return EXIT_CONFIG
        parsed[key.strip()] = value
    try:
        settings = update_settings(parsed) if parsed else get_settings()
    except ConfigError as e:
        logger.error(f"Invalid settings: {e}")
        return EXIT_CONFIG
    print(json.dumps(settings.model_dump(), indent=2, sort_keys=True, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdesk", description="Desk-scale quantum simulation experiments")
    parser.add_argument("--log-level", default=None, help="Override the configured log level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, (params_model, _) in EXPERIMENTS.items():
        sub = subparsers.add_parser(name, help=(params_model.__doc__ or name).strip().splitlines()[0])
        sub.add_argument("--config", default=None, help="Experiment config file")
        sub.add_argument("--seed", type=int, default=None, help="64-bit unsigned run seed")
        sub.add_argument("--out", default=None, help="Output directory")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads (1 runs serially)")

    check = subparsers.add_parser("check-config", help="Validate a config file and print the normalized echo")
    check.add_argument("experiment", choices=list(EXPERIMENTS))
    check.add_argument("--config", default=None, help="Experiment config file")

    subparsers.add_parser("info", help="Toolkit version, resources and settings")

    settings = subparsers.add_parser("settings", help="Show toolkit settings, or store new values in config.json")
    settings.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                          help="Setting to store (repeatable)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)

    if args.command == "info":
        print(json.dumps(_info(), indent=2, sort_keys=True, default=str))
        return EXIT_OK

    if args.command == "settings":
        return _settings_command(args.assignments)

    if args.command == "check-config":
        try:
            config, _ = validate_config(args.experiment, args.config)
        except ConfigError as e:
            logger.error(f"Invalid config: {e}")
            return EXIT_CONFIG
        print(json.dumps(config_echo(config), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        config, params = validate_config(args.command, args.config, args.seed, args.threads, args.out)
    except ConfigError as e:
        logger.error(f"Invalid config: {e}")
        return EXIT_CONFIG
    return run(config, params)


if __name__ == "__main__":
    sys.exit(main())
