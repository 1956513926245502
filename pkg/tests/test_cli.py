#!/usr/bin/env python

"""Tests for cli module."""

import tempfile
import textwrap
import unittest
from pathlib import Path
from unittest import mock

from click.testing import CliRunner

from piezoplate import cli
from piezoplate.verification import CheckResult

SMALL = """
regime = "thin"

[materials.matrix]
lambda = 1.0
mu = 1.0

[materials.inclusion]
lambda = 2.0
mu = 1.5
c = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]

[cell2d]
n = 8

[plate]
nx = 4
ny = 4

[loads]
f = [0.0, 0.0, 1.0]
"""


class TestCli(unittest.TestCase):
    """Tests for the piezoplate command line."""

    def setUp(self):
        """Runner, temporary directory and a small configuration."""
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.dir / "small.toml"
        self.config.write_text(textwrap.dedent(SMALL))

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def invoke(self, *args):
        return self.runner.invoke(cli.main, [str(a) for a in args])

    def test_validate(self):
        """A valid file reports its regime and margins."""
        result = self.invoke("validate", self.config)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("ok (thin regime, dirichlet conditions)", result.output)
        self.assertIn("elastic margin", result.output)

    def test_bad_config(self):
        """Parse errors print the stage and exit with status 1."""
        bad = self.dir / "bad.toml"
        bad.write_text('regime = "thick"\n')
        result = self.invoke("validate", bad)
        self.assertEqual(result.exit_code, 1)
        self.assertIn("error [parse]", result.output)

    def test_invalid_material(self):
        """A material without permittivity fails validation."""
        text = textwrap.dedent(SMALL).replace("c = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]", "")
        self.config.write_text(text)
        result = self.invoke("validate", self.config)
        self.assertEqual(result.exit_code, 1)
        self.assertIn("error [validate]", result.output)

    def test_run(self):
        """run writes the report and exits 0 when it passes."""
        out = self.dir / "out"
        result = self.invoke("run", self.config, "-o", out)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("passed", result.output)
        self.assertTrue((out / "report.json").is_file())

    def test_homogenize_then_plate(self):
        """The plate command reuses written effective tensors."""
        out = self.dir / "out"
        result = self.invoke("homogenize", self.config, "-o", out)
        self.assertEqual(result.exit_code, 0, result.output)
        tensors = out / "effective_tensors.json"
        self.assertTrue(tensors.is_file())
        result = self.invoke("plate", self.config, "--tensors", tensors, "-o", out)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("max deflection", result.output)
        self.assertTrue((out / "solution_nodes.csv").is_file())

    def test_plate_missing_tensors(self):
        """A missing tensor file is reported as a plate stage error."""
        result = self.invoke("plate", self.config, "-t", self.dir / "none.json")
        self.assertEqual(result.exit_code, 1)
        self.assertIn("error [plate]", result.output)

    def test_convergence_levels(self):
        """Fewer than three levels is a usage error."""
        result = self.invoke("convergence", self.config, "--levels", "8,16")
        self.assertEqual(result.exit_code, 2)
        result = self.invoke("convergence", self.config, "--levels", "8,x,16")
        self.assertEqual(result.exit_code, 2)

    def test_convergence_csv(self):
        """The convergence table is written as CSV."""
        out = self.dir / "rates.csv"
        result = self.invoke(
            "convergence", self.config, "-l", "2,4,8", "--target", "plate", "-o", out
        )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue(out.read_text().startswith("quantity,n=2,n=4,n=8,rate,exact"))

    def test_verify(self):
        """verify exits 1 when a check fails and writes JSON on request."""
        results = [
            CheckResult("good", True, 0.0, 1e-8),
            CheckResult("bad", False, 1.0, 1e-8, "too far"),
        ]
        out = self.dir / "checks.json"
        with mock.patch.object(cli, "run_verification", return_value=results):
            result = self.invoke("verify", "-o", out)
        self.assertEqual(result.exit_code, 1)
        self.assertIn("too far", result.output)
        self.assertTrue(out.is_file())


if __name__ == "__main__":
    unittest.main()
