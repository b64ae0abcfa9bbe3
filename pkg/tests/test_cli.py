import argparse
import io
import math
import os
import shutil
import tempfile
import unittest
from collections import Counter
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

from ttclock import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_VERIFY_FAILED,
    main,
    parse_angle,
    sweep_exit_code,
)


class ParseAngleTest(unittest.TestCase):
    def test_plain_numbers(self):
        self.assertEqual(parse_angle("0.7"), 0.7)
        self.assertEqual(parse_angle(" 1e-3 "), 1e-3)

    def test_pi_expressions(self):
        self.assertAlmostEqual(parse_angle("pi/2-pi/8"), 3.0 * math.pi / 8.0)
        self.assertAlmostEqual(parse_angle("0.5pi"), 0.5 * math.pi)
        self.assertAlmostEqual(parse_angle("2*pi/3"), 2.0 * math.pi / 3.0)
        self.assertAlmostEqual(parse_angle("PI / 4"), math.pi / 4.0)
        self.assertAlmostEqual(parse_angle("pi+pi/4"), 1.25 * math.pi)

    def test_invalid_angles(self):
        for value in ("abc", "xpi", "pi/0"):
            with self.assertRaises(argparse.ArgumentTypeError):
                parse_angle(value)


class SweepExitCodeTest(unittest.TestCase):
    def test_exit_codes(self):
        self.assertEqual(sweep_exit_code(Counter({"ok": 3})), EXIT_OK)
        self.assertEqual(sweep_exit_code(Counter({"ok": 2, "singular_context": 1})), EXIT_PARTIAL)
        self.assertEqual(
            sweep_exit_code(Counter({"opaque_barrier": 1, "numerical_failure": 1})), EXIT_NUMERICAL_FAILURE
        )


@patch.dict(os.environ, {"TTCLOCK_THREADS": "1"})
@patch("ttclock.load_dotenv")
class MainTest(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.directory)

    def run_main(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = main(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def output_path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def read_lines(self, path: str):
        with open(path, "r", encoding="utf-8", newline="") as handle:
            return handle.read().split("\n")

    def test_figure_list(self, _load_dotenv):
        code, stdout, _ = self.run_main("figure", "--list")

        self.assertEqual(code, EXIT_OK)
        self.assertIn("Figure presets:", stdout)
        self.assertIn("  - fig3b:", stdout)

    def test_dwell_sweep_to_file(self, _load_dotenv):
        path = self.output_path("dwell.csv")
        code, _, stderr = self.run_main("dwell", "--n", "2", "--out", path)
        lines = self.read_lines(path)

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(lines[0], "k_over_k0,tau_d,c_rr,c_rl_re,c_rl_im,lambda_plus,lambda_minus,status")
        self.assertEqual(len(lines), 4)
        self.assertEqual(lines[-1], "")
        self.assertTrue(lines[1].endswith(",ok"))
        self.assertIn("\nSummary:", stderr)
        self.assertIn("- rows written: 2", stderr)

    def test_config_file_is_layered_under_flags(self, _load_dotenv):
        config_path = self.output_path("config.json")
        with open(config_path, "w", encoding="utf-8") as handle:
            handle.write('{"n": 5, "outputs": ["transmission"]}')
        path = self.output_path("amplitudes.csv")
        code, _, _ = self.run_main("amplitudes", "--config", config_path, "--n", "3", "--out", path)
        lines = self.read_lines(path)

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(lines[0], "k_over_k0,transmission,status")
        self.assertEqual(len(lines), 5)

    def test_invalid_configuration(self, _load_dotenv):
        code, _, stderr = self.run_main("dwell", "--kmin", "0.9", "--kmax", "0.1")

        self.assertEqual(code, EXIT_CONFIG_ERROR)
        self.assertIn("Error: Invalid configuration:", stderr)
        self.assertIn("kmin/kmax", stderr)

    def test_figure_requires_a_known_preset(self, _load_dotenv):
        self.assertEqual(self.run_main("figure")[0], EXIT_CONFIG_ERROR)
        self.assertEqual(self.run_main("figure", "fig9")[0], EXIT_CONFIG_ERROR)

    def test_singular_context_sweep_is_partial(self, _load_dotenv):
        path = self.output_path("conditioned.csv")
        code, _, stderr = self.run_main(
            "conditioned", "--theta", "pi/2", "--phi", "pi/2", "--n", "2", "--out", path
        )

        self.assertEqual(code, EXIT_PARTIAL)
        self.assertIn("  - singular_context: 2", stderr)

    def test_verify_free_particle(self, _load_dotenv):
        path = self.output_path("verify.csv")
        code, _, stderr = self.run_main("verify", "--v0", "0", "--n", "2", "--out", path)
        lines = self.read_lines(path)

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(lines[0], "name,k,residual,tolerance,passed,skipped,reason")
        self.assertIn("- failed: 0", stderr)

    def test_verify_reports_failures_on_coarse_grid(self, _load_dotenv):
        path = self.output_path("verify.json")
        code, _, stderr = self.run_main(
            "verify",
            "--barrier",
            "quadratic",
            "--a",
            "88.83",
            "--slices",
            "4",
            "--n",
            "2",
            "--kmin",
            "0.3",
            "--kmax",
            "0.6",
            "--format",
            "json",
            "--out",
            path,
        )

        self.assertEqual(code, EXIT_VERIFY_FAILED)
        self.assertIn("- failed checks:", stderr)


if __name__ == "__main__":
    unittest.main()
