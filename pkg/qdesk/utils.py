import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64


def rng_stream(seed: int, index: int = 0) -> np.random.Generator:
    """
    Counter-based random stream keyed by (seed, index)

    The same (seed, index) pair yields the same stream no matter which
    thread or in which order it is requested.

    Args:
        seed: 64-bit unsigned run seed
        index: Trial, walker or draw number

    Returns:
        numpy Generator over a Philox bit generator
    """
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    if not 0 <= index < SEED_LIMIT:
        raise ValueError(f"Stream index must be a 64-bit unsigned integer, got {index}")
    return np.random.Generator(np.random.Philox(key=(index << 64) | seed))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def ensure_output_dir(out_dir) -> Path:
    """Create the output directory and confirm it accepts files"""
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        logger.error(f"Output directory {path} is not writable: {e}")
        raise PermissionError(f"Output directory not writable: {path}") from e
    return path


def _csv_value(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(path, columns: List[str], rows: Iterable[Dict[str, Any]]):
    """
    Write rows as CSV with a header row

    Floats are written with repr so reruns are byte-identical.
    """
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=columns, quoting=csv.QUOTE_MINIMAL, extrasaction='raise')
        writer.writeheader()
        count = 0
        for row in rows:
            writer.writerow({key: _csv_value(row.get(key, "")) for key in columns})
            count += 1
    logger.info(f"Wrote {count} rows to {path}")


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def write_json(path, data: Dict[str, Any]):
    """Write a JSON document with sorted keys"""
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human-readable string"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes = int(seconds // 60)
    secs = seconds % 60
    if minutes < 60:
        return f"{minutes}m {secs:.0f}s"
    hours = minutes // 60
    return f"{hours}h {minutes % 60}m"
