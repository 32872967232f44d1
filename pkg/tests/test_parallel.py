import csv
import tempfile
import time
import unittest
from pathlib import Path

import numpy as np

from qdesk.parallel import EnsembleRunner, ResourceManager
from qdesk.utils import format_duration, loglog_slope, rng_stream, write_csv


class TestEnsembleRunner(unittest.TestCase):
    def test_results_keep_submission_order(self):
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        runner = EnsembleRunner(max_workers=4)
        self.assertEqual(runner.map(slow_square, range(5)), [0, 1, 4, 9, 16])
        self.assertEqual(runner.completed_tasks, 5)

    def test_first_failure_is_raised(self):
        def fail_on_odd(x):
            if x % 2:
                raise RuntimeError(f"task {x}")
            return x

        runner = EnsembleRunner(max_workers=2)
        with self.assertRaises(RuntimeError) as ctx:
            runner.map(fail_on_odd, range(4))
        self.assertEqual(str(ctx.exception), "task 1")
        self.assertEqual(runner.failed_tasks, 2)

    def test_progress_callback(self):
        reports = []
        runner = EnsembleRunner(max_workers=1, progress_callback=reports.append)
        runner.map(lambda x: x, range(3))
        self.assertEqual(reports[-1], {'total': 3, 'completed': 3, 'failed': 0})

    def test_invalid_worker_count(self):
        with self.assertRaises(ValueError):
            EnsembleRunner(max_workers=0)

    def test_resource_snapshot(self):
        snapshot = ResourceManager.snapshot()
        self.assertGreaterEqual(snapshot['recommended_workers'], 1)
        self.assertEqual(ResourceManager.dense_matrix_bytes(2), 16 * 16)


class TestStreams(unittest.TestCase):
    def test_streams_are_reproducible(self):
        a = rng_stream(42, 3).random(4)
        b = rng_stream(42, 3).random(4)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_distinct(self):
        self.assertNotEqual(rng_stream(42, 0).random(), rng_stream(42, 1).random())
        self.assertNotEqual(rng_stream(42, 0).random(), rng_stream(43, 0).random())

    def test_stream_independent_of_thread(self):
        runner = EnsembleRunner(max_workers=3)
        parallel = runner.map(lambda i: rng_stream(8, i).random(), range(6))
        serial = [rng_stream(8, i).random() for i in range(6)]
        self.assertEqual(parallel, serial)

    def test_seed_range(self):
        with self.assertRaises(ValueError):
            rng_stream(-1)
        with self.assertRaises(ValueError):
            rng_stream(2 ** 64)


class TestUtils(unittest.TestCase):
    def test_loglog_slope(self):
        x = [0.1, 0.05, 0.025]
        self.assertAlmostEqual(loglog_slope(x, [v ** 2 for v in x]), 2.0)

    def test_format_duration(self):
        self.assertEqual(format_duration(5.0), "5.0s")
        self.assertEqual(format_duration(125.0), "2m 5s")
        self.assertEqual(format_duration(7260.0), "2h 1m")

    def test_write_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rows.csv"
            write_csv(path, ['a', 'b'], [{'a': 1, 'b': True}, {'a': 0.1}])
            with open(path, newline='') as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ['a', 'b'])
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[2][1], "")


if __name__ == '__main__':
    unittest.main()
