import io
import json
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path

from qdesk.cli import (EXIT_CONFIG, EXIT_OK, PROVENANCE_FILE, RESULTS_FILE, SUMMARY_FILE, main, run,
                       validate_config)
from qdesk.config import CONFIG_FILE, ConfigError, get_project_root, get_settings
from qdesk.logging_config import RUN_LOG_FILE


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, text: str, name: str = "run.cfg") -> str:
        path = self.root / name
        path.write_text(text, encoding="utf-8")
        return str(path)


class TestValidateConfig(CliTestCase):
    def test_defaults(self):
        config, params = validate_config("qft-check")
        self.assertEqual(config.seed, 0)
        self.assertEqual(params.max_qubits, 8)
        self.assertTrue(config.out_dir.endswith("qft-check"))

    def test_flag_overrides_run_table(self):
        path = self.write_config("[run]\nseed = 5\nthreads = 2\n\n[params]\nmax_qubits = 3\n")
        config, _ = validate_config("qft-check", path)
        self.assertEqual((config.seed, config.threads), (5, 2))
        config, _ = validate_config("qft-check", path, seed=9, out=str(self.root / "elsewhere"))
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.out_dir, str(self.root / "elsewhere"))

    def test_out_of_range_value_names_key(self):
        path = self.write_config("epsilon = -1\n")
        with self.assertRaises(ConfigError) as ctx:
            validate_config("h2-energy", path)
        self.assertEqual(ctx.exception.key, "epsilon")

    def test_unknown_key(self):
        path = self.write_config("max_qubits = 3\nspeed = 11\n")
        with self.assertRaises(ConfigError) as ctx:
            validate_config("qft-check", path)
        self.assertEqual(ctx.exception.key, "speed")
        self.assertIn("speed", str(ctx.exception))

    def test_negative_seed(self):
        with self.assertRaises(ConfigError) as ctx:
            validate_config("qft-check", seed=-1)
        self.assertEqual(ctx.exception.key, "seed")

    def test_unknown_experiment(self):
        with self.assertRaises(ConfigError):
            validate_config("teleport")


class TestMain(CliTestCase):
    def test_check_config_echo(self):
        path = self.write_config("max_qubits = 4\n")
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            status = main(["check-config", "qft-check", "--config", path])
        self.assertEqual(status, EXIT_OK)
        echo = json.loads(buffer.getvalue())
        self.assertEqual(echo['experiment'], "qft-check")
        self.assertEqual(echo['params'], {'max_qubits': 4})
        self.assertEqual(echo['run']['seed'], 0)

    def test_duplicate_key_exits_with_config_error(self):
        path = self.write_config("max_qubits = 3\nmax_qubits = 4\n")
        self.assertEqual(main(["check-config", "qft-check", "--config", path]), EXIT_CONFIG)
        self.assertEqual(main(["qft-check", "--config", path, "--out", str(self.root / "dup")]), EXIT_CONFIG)

    def test_missing_config_file(self):
        self.assertEqual(main(["qft-check", "--config", str(self.root / "absent.cfg")]), EXIT_CONFIG)

    def test_missing_integral_file(self):
        path = self.write_config(f"integrals = '{self.root / 'none.txt'}'\np = 3\n")
        self.assertEqual(main(["h2-energy", "--config", path, "--out", str(self.root / "h2")]), EXIT_CONFIG)

    def test_run_writes_artifacts(self):
        path = self.write_config("max_qubits = 3\n")
        out = self.root / "qft"
        self.assertEqual(main(["qft-check", "--config", path, "--seed", "4", "--out", str(out)]), EXIT_OK)
        for name in (RESULTS_FILE, SUMMARY_FILE, PROVENANCE_FILE, RUN_LOG_FILE):
            self.assertTrue((out / name).exists(), name)
        summary = json.loads((out / SUMMARY_FILE).read_text())
        self.assertTrue(summary['passed'])
        self.assertEqual(summary['seed'], 4)
        header = (out / RESULTS_FILE).read_text().splitlines()[0]
        self.assertEqual(header, "n,gates,gate_bound,max_deviation,inverse_deviation,state_deviation")

    def test_reruns_are_identical(self):
        path = self.write_config("max_qubits = 3\n")
        first, second = self.root / "a", self.root / "b"
        main(["qft-check", "--config", path, "--seed", "7", "--out", str(first)])
        main(["qft-check", "--config", path, "--seed", "7", "--out", str(second), "--threads", "2"])
        for name in (RESULTS_FILE, SUMMARY_FILE):
            if name == SUMMARY_FILE:
                a = json.loads((first / name).read_text())
                b = json.loads((second / name).read_text())
                a.pop('threads')
                b.pop('threads')
                self.assertEqual(a, b)
            else:
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_thermal_bound_has_no_violations(self):
        config, params = validate_config("thermal-bound", self.write_config(
            "draws = 3\nbetas = [0.5, 2.0]\nepsilons = [0.05]\n"), out=str(self.root / "bound"))
        self.assertEqual(run(config, params), EXIT_OK)
        summary = json.loads((self.root / "bound" / SUMMARY_FILE).read_text())
        self.assertEqual(summary['metrics']['violations'], 0)
        self.assertEqual(summary['metrics']['checks'], 6)


class TestSettingsCommand(CliTestCase):
    def setUp(self):
        super().setUp()
        self.config_path = get_project_root() / CONFIG_FILE
        self.backup = self.config_path.read_text() if self.config_path.exists() else None

    def tearDown(self):
        if self.backup is not None:
            self.config_path.write_text(self.backup)
        elif self.config_path.exists():
            self.config_path.unlink()
        get_settings.cache_clear()
        super().tearDown()

    def test_set_persists_and_echoes(self):
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            status = main(["settings", "--set", "threads=2", "--set", "results_dir=runs"])
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(json.loads(buffer.getvalue())['threads'], 2)
        stored = json.loads(self.config_path.read_text())
        self.assertEqual((stored['threads'], stored['results_dir']), (2, "runs"))
        config, _ = validate_config("qft-check")
        self.assertEqual(config.threads, 2)

    def test_bad_assignment_leaves_file_alone(self):
        before = self.config_path.read_text() if self.config_path.exists() else None
        self.assertEqual(main(["settings", "--set", "threads"]), EXIT_CONFIG)
        self.assertEqual(main(["settings", "--set", "threads=0"]), EXIT_CONFIG)
        after = self.config_path.read_text() if self.config_path.exists() else None
        self.assertEqual(before, after)


if __name__ == '__main__':
    unittest.main()
