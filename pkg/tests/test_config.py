#!/usr/bin/env python

"""Tests for config module."""

import tempfile
import textwrap
import unittest
from pathlib import Path

from piezoplate.common import ConfigParseError
from piezoplate.config import config_from_dict, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[materials.matrix]
lambda = 1.0
mu = 1.0

[materials.inclusion]
lambda = 2.0
mu = 1.5
c = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
"""


def materials():
    return {
        "matrix": {"lambda": 1.0, "mu": 1.0},
        "inclusion": {"lambda": 2.0, "mu": 1.5, "c": [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]},
    }


class TestParseConfig(unittest.TestCase):
    """Tests for reading TOML files."""

    def setUp(self):
        """Create a temporary directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def write(self, text):
        path = self.dir / "run.toml"
        path.write_text(textwrap.dedent(text))
        return path

    def test_minimal_defaults(self):
        """A file with only materials gets the documented defaults."""
        config = parse_config(self.write(MINIMAL))
        self.assertEqual(config.regime, "thin")
        self.assertEqual(config.circuit.bc_type, "dirichlet")
        self.assertEqual(config.cell2d_n, 64)
        self.assertEqual(config.cell3d_n, 16)
        self.assertEqual(config.cell3d_nz, 8)
        self.assertEqual(config.plate.nx, 32)
        self.assertEqual(config.plate.clamped_edges, ("left", "right", "bottom", "top"))
        self.assertEqual(config.inclusion.kind, "disk")
        self.assertEqual(config.inclusion.size, 0.25)
        self.assertEqual(config.output_dir, Path("output"))
        self.assertEqual(config.source, self.dir / "run.toml")

    def test_missing_file(self):
        """A missing file is a parse error."""
        with self.assertRaises(ConfigParseError):
            parse_config(self.dir / "absent.toml")

    def test_malformed_toml(self):
        """Broken TOML is a parse error."""
        with self.assertRaises(ConfigParseError):
            parse_config(self.write("regime = \n"))

    def test_sample_configs(self):
        """Every shipped sample configuration parses."""
        paths = sorted(CONFIGS.glob("*.toml"))
        self.assertGreaterEqual(len(paths), 3)
        for path in paths:
            config = parse_config(path)
            self.assertIn(config.regime, ("thin", "comparable"))

    def test_nonlocal_sample(self):
        """The cantilever sample keeps its edge load and circuit."""
        config = parse_config(CONFIGS / "thin_nonlocal.toml")
        self.assertEqual(config.plate.clamped_edges, ("left",))
        self.assertEqual(config.circuit.G1, 0.01)
        self.assertIn("right", config.loads.g_edges)
        self.assertEqual(config.inclusion.kind, "square")


class TestConfigFromDict(unittest.TestCase):
    """Tests for cross-section validation."""

    def build(self, **sections):
        data = {"materials": materials()}
        data.update(sections)
        return config_from_dict(data)

    def assertField(self, field, **sections):
        with self.assertRaises(ConfigParseError) as ctx:
            self.build(**sections)
        self.assertEqual(ctx.exception.field, field)

    def test_dirichlet_rejects_current(self):
        """A current source needs mixed conditions."""
        self.assertField("loads.h", loads={"h": 1.0})

    def test_mixed_rejects_voltage(self):
        """An imposed voltage needs Dirichlet conditions."""
        self.assertField(
            "loads.phi_c",
            circuit={"bc_type": "local_mixed", "G": 0.5},
            loads={"phi_c": {"x1": 1.0}},
        )

    def test_negative_g1(self):
        """A negative G1 is reported with its field name."""
        circuit = {"bc_type": "nonlocal_mixed", "G1": -1.0}
        self.assertField("circuit.G1", circuit=circuit)

    def test_g1_needs_nonlocal(self):
        """G1 only makes sense with nonlocal circuits."""
        self.assertField("circuit.G1", circuit={"bc_type": "local_mixed", "G1": 0.1})

    def test_neumann_has_no_admittance(self):
        """Neumann conditions are circuits with G = 0."""
        self.assertField("circuit.G", circuit={"bc_type": "neumann", "G": 0.1})

    def test_unknown_bc_type(self):
        """Unknown electric conditions are rejected."""
        self.assertField("circuit.bc_type", circuit={"bc_type": "floating"})

    def test_unknown_regime(self):
        """Only the thin and comparable regimes exist."""
        self.assertField("regime", regime="thick")

    def test_missing_material(self):
        """Both phases are required."""
        with self.assertRaises(ConfigParseError) as ctx:
            config_from_dict({"materials": {"matrix": {"lambda": 1.0, "mu": 1.0}}})
        self.assertEqual(ctx.exception.field, "materials.inclusion")

    def test_material_needs_elasticity(self):
        """A phase without R or lambda and mu is rejected."""
        data = {"materials": materials()}
        data["materials"]["matrix"] = {"mu": 1.0}
        with self.assertRaises(ConfigParseError) as ctx:
            config_from_dict(data)
        self.assertEqual(ctx.exception.field, "materials.matrix")

    def test_edge_load_on_clamped_edge(self):
        """Lateral forces act on free edges only."""
        self.assertField(
            "loads.edges.left",
            plate={"clamped_edges": ["left"]},
            loads={"edges": {"left": {"g": [0.0, 0.0, 1.0]}}},
        )

    def test_empty_clamped_edges(self):
        """The plate must be clamped somewhere."""
        self.assertField("plate.clamped_edges", plate={"clamped_edges": []})

    def test_cell_size_minimum(self):
        """Cell meshes need at least four subdivisions."""
        self.assertField("cell2d.n", cell2d={"n": 2})

    def test_integer_sizes(self):
        """Mesh sizes must be integers."""
        self.assertField("plate.nx", plate={"nx": 8.5})

    def test_unknown_inclusion_shape(self):
        """Inclusion geometry errors surface as parse errors."""
        self.assertField("inclusion", inclusion={"shape": "hexagon"})

    def test_refined_copies(self):
        """with_cell_size and with_plate_size leave the original alone."""
        config = self.build(regime="comparable", cell3d={"n": 8})
        refined = config.with_cell_size(12).with_plate_size(4)
        self.assertEqual(refined.cell3d_n, 12)
        self.assertEqual(refined.plate.nx, 4)
        self.assertEqual(refined.plate.ny, 4)
        self.assertEqual(config.cell3d_n, 8)
        self.assertEqual(config.plate.nx, 32)

    def test_loads_carry_circuit(self):
        """The circuit constants are attached to the loads."""
        config = self.build(
            circuit={"bc_type": "nonlocal_mixed", "G": 0.3, "G1": 0.2},
            loads={"h": {"1": 1.0, "x1": 2.0}},
        )
        self.assertEqual(config.loads.G, 0.3)
        self.assertEqual(config.loads.G1, 0.2)
        self.assertEqual(config.loads.h(1.0, 0.0), 3.0)


if __name__ == "__main__":
    unittest.main()
