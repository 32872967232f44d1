import logging
import logging.handlers
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
RUN_LOG_FILE = "run.log"


def _level(log_level: str) -> int:
    numeric_level = getattr(logging, log_level.upper(), None)
    return numeric_level if isinstance(numeric_level, int) else logging.INFO


def setup_logging(log_dir: Union[str, Path] = "logs", log_level: str = "INFO", log_file: str = "qdesk.log"):
    """
    Setup toolkit logging: rotating file in log_dir plus console
    """
    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(_level(log_level))
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)

    # 10MB per file, 5 backups
    file_handler = logging.handlers.RotatingFileHandler(log_path / log_file, maxBytes=10*1024*1024, backupCount=5)
    file_handler.setFormatter(formatter)
    root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    logging.getLogger(__name__).info(f"Logging initialized in {log_path} at level {log_level}")


@contextmanager
def run_log(out_dir: Union[str, Path]) -> Iterator[Path]:
    """
    Copy every record emitted during one experiment run into out_dir/run.log

    The file is rewritten on each run so it belongs to that run's artifacts.
    """
    path = Path(out_dir) / RUN_LOG_FILE
    handler = logging.FileHandler(path, mode='w', encoding='utf-8')
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root_logger = logging.getLogger()
    root_logger.addHandler(handler)
    try:
        yield path
    finally:
        root_logger.removeHandler(handler)
        handler.close()
