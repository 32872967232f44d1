"""
Parallel ensemble runner with resource-aware worker sizing
Fans independent trials, walkers and draws out over a thread pool
"""
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

import psutil

logger = logging.getLogger(__name__)

BYTES_PER_AMPLITUDE = 16


class ResourceManager:
    """Detects and manages system resources for optimal concurrency"""

    @staticmethod
    def get_cpu_count() -> int:
        """Get number of CPU cores"""
        return os.cpu_count() or 2

    @staticmethod
    def get_available_memory_gb() -> float:
        """Get available RAM in GB"""
        try:
            mem = psutil.virtual_memory()
            return mem.available / (1024 ** 3)
        except Exception:
            return 4.0  # Default assumption

    @staticmethod
    def dense_matrix_bytes(n_qubits: int) -> int:
        """Memory needed for one dense 2^n x 2^n complex matrix"""
        return (1 << (2 * n_qubits)) * BYTES_PER_AMPLITUDE

    @staticmethod
    def get_max_workers(state_qubits: int = 10) -> int:
        """
        Recommended worker count for an ensemble

        Args:
            state_qubits: Largest register a single worker holds as a dense matrix

        Returns:
            Recommended max concurrent workers
        """
        cpu_count = ResourceManager.get_cpu_count()
        available_mem_gb = ResourceManager.get_available_memory_gb()

        logger.info(f"System resources: {cpu_count} CPUs, {available_mem_gb:.1f}GB RAM")

        # a few dense matrices alive per worker
        per_worker_gb = 4 * ResourceManager.dense_matrix_bytes(state_qubits) / (1024 ** 3)
        mem_based_limit = int(available_mem_gb / per_worker_gb) if per_worker_gb > 0 else cpu_count

        recommended = max(1, min(cpu_count, mem_based_limit))
        logger.info(f"Recommended max workers: {recommended}")
        return recommended

    @staticmethod
    def snapshot() -> dict:
        """Resource health report"""
        return {
            'cpu_count': ResourceManager.get_cpu_count(),
            'available_memory_gb': round(ResourceManager.get_available_memory_gb(), 2),
            'recommended_workers': ResourceManager.get_max_workers(),
        }


class EnsembleRunner:
    """Runs independent tasks in parallel and returns results in submission order"""

    def __init__(self, max_workers: Optional[int] = None, progress_callback: Optional[Callable[[dict], None]] = None):
        """
        Args:
            max_workers: Thread count (auto-detect if None, 1 runs serially)
            progress_callback: Called with a progress dict after each task
        """
        if max_workers is None:
            self.max_workers = ResourceManager.get_max_workers()
        else:
            if max_workers < 1:
                raise ValueError(f"max_workers must be >= 1, got {max_workers}")
            self.max_workers = max_workers

        self.progress_callback = progress_callback

        # Statistics
        self.total_tasks = 0
        self.completed_tasks = 0
        self.failed_tasks = 0
        self._lock = threading.Lock()

        logger.info(f"EnsembleRunner initialized with max_workers={self.max_workers}")

    def map(self, fn: Callable[[Any], Any], items: Sequence[Any], label: str = "ensemble") -> List[Any]:
        """
        Apply fn to every item

        Args:
            fn: Task body; must own everything it mutates
            items: Task inputs
            label: Name used in log lines

        Returns:
            Results in the order of items

        Raises:
            The first task exception, after all tasks have finished
        """
        items = list(items)
        self.total_tasks = len(items)
        self.completed_tasks = 0
        self.failed_tasks = 0

        logger.info(f"Starting {label}: {self.total_tasks} tasks on {self.max_workers} workers")

        if self.max_workers == 1:
            results = [self._run_one(fn, item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                futures = [executor.submit(self._run_one, fn, item) for item in items]
                results = [future.result() for future in futures]

        logger.info(f"{label} complete: {self.completed_tasks} succeeded, {self.failed_tasks} failed")

        errors = [r for r in results if isinstance(r, _TaskFailure)]
        if errors:
            raise errors[0].error
        return results

    def _run_one(self, fn, item):
        try:
            result = fn(item)
            with self._lock:
                self.completed_tasks += 1
        except Exception as e:
            with self._lock:
                self.failed_tasks += 1
            logger.error(f"Task {item!r} failed: {e}")
            result = _TaskFailure(e)
        self._report_progress()
        return result

    def _report_progress(self):
        if self.progress_callback:
            try:
                self.progress_callback({
                    'total': self.total_tasks,
                    'completed': self.completed_tasks,
                    'failed': self.failed_tasks,
                })
            except Exception as e:
                logger.error(f"Error reporting progress: {e}")


class _TaskFailure:
    def __init__(self, error: Exception):
        self.error = error
