#!/usr/bin/env python

"""Tests for serialization module."""

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from piezoplate import serialization
from piezoplate.cell2d import EffectiveTensorsThin, homogenize_thin
from piezoplate.cell3d import EffectiveTensorsComparable
from piezoplate.common import ConfigurationError
from piezoplate.femcore import InclusionShape, PlateMesh, build_cell_mesh_2d
from piezoplate.loads import Loads
from piezoplate.material import (
    ElasticTensor,
    PermittivityTensor,
    PiezoTensor,
    assemble_global_tensor,
)
from piezoplate.plate import KLSpace, solve_dirichlet_thin, solve_local_mixed_thin


def phase(lam, mu, piezo=False):
    rows = [[0.0] * 6, [0.0] * 6, [-0.2, -0.2, 0.4, 0.0, 0.0, 0.0]]
    return assemble_global_tensor(
        ElasticTensor.isotropic(lam, mu),
        PiezoTensor.from_voigt(rows) if piezo else PiezoTensor(),
        PermittivityTensor(np.eye(3)),
    )


class TestEffectiveTensors(unittest.TestCase):
    """Tests for writing and reading effective tensors."""

    def setUp(self):
        """Computed tensors and a temporary directory."""
        mesh = build_cell_mesh_2d(8, InclusionShape("disk", 0.25))
        self.E5, _ = homogenize_thin(mesh, phase(1.0, 1.0), phase(2.0, 1.5, piezo=True))
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_thin_round_trip_is_exact(self):
        """Tensors read back are bitwise equal to the ones written."""
        path = serialization.write_effective_tensors(self.dir / "e.json", self.E5)
        again = serialization.read_effective_tensors(path)
        self.assertIsInstance(again, EffectiveTensorsThin)
        for key in EffectiveTensorsThin.KEYS:
            np.testing.assert_array_equal(getattr(again, key), getattr(self.E5, key))

    def test_comparable_round_trip(self):
        """Comparable tensors keep their regime tag."""
        E6 = EffectiveTensorsComparable.from_thin(self.E5)
        path = serialization.write_effective_tensors(self.dir / "sub" / "e.json", E6)
        self.assertEqual(json.loads(path.read_text())["regime"], "comparable")
        again = serialization.read_effective_tensors(path)
        np.testing.assert_array_equal(again.R_NN_H, E6.R_NN_H)

    def test_key_order(self):
        """Tensor keys are written in their fixed order."""
        data = serialization.effective_tensors_to_dict(self.E5)
        self.assertEqual(list(data["tensors"]), list(EffectiveTensorsThin.KEYS))

    def test_identical_output(self):
        """Writing the same tensors twice gives identical files."""
        a = serialization.write_effective_tensors(self.dir / "a.json", self.E5)
        b = serialization.write_effective_tensors(self.dir / "b.json", self.E5)
        self.assertEqual(a.read_text(), b.read_text())

    def test_unknown_regime(self):
        """An unknown regime tag is rejected."""
        with self.assertRaises(ConfigurationError):
            serialization.effective_tensors_from_dict(
                {"regime": "thick", "tensors": {}}
            )

    def test_incomplete_tensors(self):
        """Missing keys are rejected."""
        data = serialization.effective_tensors_to_dict(self.E5)
        del data["tensors"]["R_N_H"]
        with self.assertRaises(ConfigurationError):
            serialization.effective_tensors_from_dict(data)

    def test_missing_and_malformed_files(self):
        """Unreadable files raise ConfigurationError."""
        with self.assertRaises(ConfigurationError):
            serialization.read_json(self.dir / "absent.json")
        broken = self.dir / "broken.json"
        broken.write_text("{not json")
        with self.assertRaises(ConfigurationError):
            serialization.read_json(broken)

    def test_numpy_values(self):
        """numpy scalars, arrays and paths serialize as plain JSON."""
        text = serialization.dumps(
            {"i": np.int64(3), "f": np.float64(0.5), "a": np.eye(2), "p": Path("x")}
        )
        expected = {"i": 3, "f": 0.5, "a": [[1, 0], [0, 1]], "p": "x"}
        self.assertEqual(json.loads(text), expected)


class TestSolution(unittest.TestCase):
    """Tests for the plate solution artifacts."""

    def setUp(self):
        """Temporary directory and constant tensors."""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        mesh = build_cell_mesh_2d(4, InclusionShape("disk", 0.25))
        self.E5, _ = homogenize_thin(mesh, phase(1.0, 1.0), phase(2.0, 1.5, piezo=True))
        self.space = KLSpace.build(PlateMesh.rectangle(4, 4))

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_nodal_voltage(self):
        """A nodal voltage writes the JSON and the nodal CSV only."""
        solution = solve_dirichlet_thin(self.E5, Loads(f=(0.0, 0.0, 1.0)), self.space)
        paths = serialization.write_solution(self.dir, solution)
        self.assertEqual(
            [p.name for p in paths],
            [serialization.SOLUTION_FILE, serialization.NODAL_FILE],
        )
        table = pd.read_csv(paths[1], float_precision="round_trip")
        self.assertEqual(len(table), 25)
        self.assertIn("L3", table.columns)
        np.testing.assert_array_equal(table["w"].to_numpy(), solution.deflection[0::4])
        data = json.loads(paths[0].read_text())
        self.assertEqual(data["voltage_space"], "Q1-scalar")
        self.assertEqual(data["summary"]["model"], "dirichlet_thin")

    def test_pointwise_voltage(self):
        """A pointwise voltage adds the element table."""
        solution = solve_local_mixed_thin(self.E5, 0.5, Loads(h=1.0), self.space)
        paths = serialization.write_solution(self.dir, solution)
        self.assertEqual(paths[-1].name, serialization.ELEMENT_FILE)
        table = pd.read_csv(paths[-1])
        self.assertEqual(list(table.columns), ["x1", "x2", "L3_mean"])
        self.assertEqual(len(table), 16)

    def test_quadrature_voltage_round_trip(self):
        """solution.json carries L3 at every quadrature point, bitwise."""
        loads = Loads(f=(0.1, 0.0, 1.0), h={"1": 1.0, "x1": 0.5})
        solution = solve_local_mixed_thin(self.E5, 0.5, loads, self.space)
        paths = serialization.write_solution(self.dir, solution)
        points, voltage = serialization.read_quadrature_voltage(paths[0])
        self.assertEqual(voltage.shape, (16, 16))
        np.testing.assert_array_equal(voltage, solution.voltage_values())
        np.testing.assert_array_equal(voltage.ravel(), solution.voltage)
        self.assertTrue(np.all((points > 0.0) & (points < 1.0)))
        data = json.loads(paths[0].read_text())
        self.assertEqual(data["quadrature"]["order"], 4)

    def test_quadrature_voltage_rejects_mismatch(self):
        """Voltage and point tables of different shapes are an error."""
        data = {"quadrature": {"x1": [[0.5]], "x2": [[0.5]], "L3": [[1.0, 2.0]]}}
        with self.assertRaises(ConfigurationError):
            serialization.quadrature_voltage_from_dict(data)
        with self.assertRaises(ConfigurationError):
            serialization.quadrature_voltage_from_dict({})


if __name__ == "__main__":
    unittest.main()
