import ast
import configparser
import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv
from pydantic import ValidationError

from .models import Settings

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"

RUN_SECTION = "run"
PARAMS_SECTION = "params"
RUN_KEYS = ("seed", "threads", "out")


class ConfigError(ValueError):
    """Custom exception for configuration errors"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 key: Optional[str] = None):
        self.line = line
        self.column = column
        self.key = key
        location = ""
        if line is not None:
            location = f"line {line}"
            if column is not None:
                location += f", column {column}"
            location += ": "
        super().__init__(f"{location}{message}")


def get_project_root() -> Path:
    """Get the absolute path to the project root"""
    return Path(__file__).parent.parent.absolute()


def _read_config_file() -> Dict[str, Any]:
    config_path = get_project_root() / CONFIG_FILE
    if not config_path.exists():
        return {}
    try:
        with open(config_path, 'r') as f:
            return json.load(f)
    except Exception as e:
        logger.warning(f"Failed to load config file: {e}")
        return {}


def load_settings() -> Settings:
    """
    Load toolkit settings from config.json, then environment variables
    Environment variables (and a .env file) take priority over the config file
    """
    load_dotenv()
    settings = Settings(**_read_config_file())

    overrides = {}
    if os.getenv('QDESK_LOG_DIR'):
        overrides['log_dir'] = os.getenv('QDESK_LOG_DIR')

    if os.getenv('QDESK_LOG_LEVEL'):
        overrides['log_level'] = os.getenv('QDESK_LOG_LEVEL')

    if os.getenv('QDESK_RESULTS_DIR'):
        overrides['results_dir'] = os.getenv('QDESK_RESULTS_DIR')

    if os.getenv('QDESK_MAX_DENSE_QUBITS'):
        overrides['max_dense_qubits'] = int(os.getenv('QDESK_MAX_DENSE_QUBITS'))

    if os.getenv('QDESK_THREADS'):
        overrides['threads'] = int(os.getenv('QDESK_THREADS'))

    if overrides:
        settings = Settings(**{**settings.model_dump(), **overrides})

    _ensure_directories(settings)

    return settings


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings loaded once per process"""
    return load_settings()


def _ensure_directories(settings: Settings):
    """Ensure the log directory exists"""
    log_dir = Path(settings.log_dir)
    if not log_dir.is_absolute():
        log_dir = get_project_root() / log_dir
    log_dir.mkdir(parents=True, exist_ok=True)


def save_settings(settings: Settings):
    """Save settings to config.json"""
    config_path = get_project_root() / CONFIG_FILE
    with open(config_path, 'w') as f:
        json.dump(settings.model_dump(), f, indent=2, default=str)


def update_settings(assignments: Dict[str, str]) -> Settings:
    """
    Apply key=value assignments to the settings stored in config.json

    Environment overrides are not written back. Values are Python literals,
    with bare text taken as a string; "None" clears an optional setting.

    Raises:
        ConfigError: Unknown key or invalid value (config.json is left untouched)
    """
    unknown = sorted(set(assignments) - set(Settings.model_fields))
    if unknown:
        raise ConfigError(f"Unknown settings: {', '.join(unknown)}", key=unknown[0])
    stored = {**_read_config_file(), **{key: _parse_value(raw) for key, raw in assignments.items()}}
    try:
        settings = Settings(**stored)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first.get('loc', ()))
        raise ConfigError(f"Invalid value for '{key}': {first.get('msg')}", key=key) from e
    save_settings(settings)
    get_settings.cache_clear()
    logger.info(f"Saved settings {', '.join(sorted(assignments))} to {CONFIG_FILE}")
    return settings


def _parse_value(raw: str) -> Any:
    """Python literal if the text is one, otherwise the bare string"""
    text = raw.strip()
    if text == "":
        return ""
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _first_content_line(text: str) -> Optional[str]:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith('#'):
            return stripped
    return None


def _column_of(text: str, line_number: int) -> int:
    lines = text.splitlines()
    if 1 <= line_number <= len(lines):
        line = lines[line_number - 1]
        return len(line) - len(line.lstrip()) + 1
    return 1


def read_experiment_file(path) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """
    Parse an experiment config file into its run and params tables

    Args:
        path: Path to a "key = value" file with optional [run]/[params] sections

    Returns:
        (run table, params table) with values converted from Python literals

    Raises:
        ConfigError: On missing file, syntax errors, duplicates or unknown sections
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    text = path.read_text(encoding="utf-8")

    # keys before any section header belong to [params]
    offset = 0
    source = text
    first = _first_content_line(text)
    if first is not None and not first.startswith('['):
        source = f"[{PARAMS_SECTION}]\n{text}"
        offset = 1

    parser = configparser.ConfigParser(
        strict=True,
        interpolation=None,
        inline_comment_prefixes=('#',),
        comment_prefixes=('#',),
        empty_lines_in_values=False,
    )

    try:
        parser.read_string(source, source=str(path))
    except configparser.DuplicateOptionError as e:
        line = e.lineno - offset if e.lineno else None
        raise ConfigError(f"Duplicate key '{e.option}' in section [{e.section}]",
                          line=line, column=_column_of(text, line) if line else None, key=e.option)
    except configparser.DuplicateSectionError as e:
        line = e.lineno - offset if e.lineno else None
        raise ConfigError(f"Duplicate section [{e.section}]", line=line)
    except configparser.MissingSectionHeaderError as e:
        line = e.lineno - offset
        raise ConfigError(f"Expected 'key = value' or [section], got {e.line.strip()!r}",
                          line=line, column=_column_of(text, line))
    except configparser.ParsingError as e:
        lineno, line_text = e.errors[0]
        line = lineno - offset
        raise ConfigError(f"Expected 'key = value', got {line_text.strip()!r}",
                          line=line, column=_column_of(text, line))

    run: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    for section in parser.sections():
        if section == RUN_SECTION:
            target = run
        elif section == PARAMS_SECTION:
            target = params
        else:
            raise ConfigError(f"Unknown section [{section}] (expected [{RUN_SECTION}] or [{PARAMS_SECTION}])")
        for key, raw in parser.items(section):
            target[key] = _parse_value(raw)

    unknown_run = sorted(set(run) - set(RUN_KEYS))
    if unknown_run:
        raise ConfigError(f"Unknown keys in [{RUN_SECTION}]: {', '.join(unknown_run)}", key=unknown_run[0])

    logger.debug(f"Read experiment config {path}: run={run} params={params}")
    return run, params
