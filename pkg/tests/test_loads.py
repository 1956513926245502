#!/usr/bin/env python

"""Tests for loads module."""

import unittest

import numpy as np

from piezoplate.common import ConfigurationError
from piezoplate.femcore import PlateMesh
from piezoplate.loads import ZERO, Loads, Polynomial, reduce_loads


class TestPolynomial(unittest.TestCase):
    """Tests for load polynomials."""

    def test_parse_number_and_table(self):
        """Numbers are constants and tables map monomials to coefficients."""
        self.assertEqual(Polynomial.parse(2.5)(0.3, 0.4), 2.5)
        p = Polynomial.parse({"1": 1.0, "x1*x2^2": 2.0, "x3": -1.0})
        self.assertAlmostEqual(float(p(1.0, 2.0, 0.5)), 1.0 + 8.0 - 0.5)
        self.assertEqual(p.degree, 3)

    def test_parse_rejects_bad_input(self):
        """Unknown monomials, high degrees and booleans are errors."""
        with self.assertRaises(ConfigurationError):
            Polynomial.parse({"y1": 1.0})
        with self.assertRaises(ConfigurationError):
            Polynomial.parse({"x1^2*x2^2": 1.0})
        with self.assertRaises(ConfigurationError):
            Polynomial.parse(True)

    def test_terms_merge_and_cancel(self):
        """Equal monomials merge and zero coefficients vanish."""
        p = Polynomial.parse({"x1": 1.0}) + Polynomial.parse({"x1": -1.0})
        self.assertTrue(p.is_zero)
        self.assertTrue(ZERO.is_zero)
        self.assertEqual(ZERO.degree, 0)

    def test_arithmetic(self):
        """Scaling and negation act on every coefficient."""
        p = Polynomial.parse({"x1": 2.0, "1": 1.0})
        np.testing.assert_allclose((3.0 * p)(1.0, 0.0), 9.0)
        np.testing.assert_allclose((-p)(1.0, 0.0), -3.0)
        np.testing.assert_allclose((p + 1.0)(0.0, 0.0), 2.0)

    def test_subtraction(self):
        """Differences of polynomials and numbers on either side."""
        p = Polynomial.parse({"x1": 2.0, "1": 1.0})
        q = Polynomial.parse({"x1": 2.0, "x2": 4.0})
        np.testing.assert_allclose((p - q)(1.5, 0.5), 1.0 - 2.0)
        np.testing.assert_allclose((p - 1.0)(1.0, 0.0), 2.0)
        np.testing.assert_allclose((1.0 - p)(1.0, 0.0), -2.0)
        np.testing.assert_allclose((2.0 + p)(0.0, 0.0), 3.0)
        self.assertTrue((p - p).is_zero)
        self.assertIsInstance(-p - q + p, Polynomial)

    def test_evaluate_at_points(self):
        """at() evaluates on stacked planar points with x3 = 0."""
        p = Polynomial.parse({"x1": 1.0, "x2": 10.0, "x3": 100.0})
        points = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        np.testing.assert_allclose(p.at(points), [[21.0, 43.0]])

    def test_thickness_moments(self):
        """Integrals of x3^k p over (-1, 1) keep the even powers only."""
        p = Polynomial.parse({"1": 3.0, "x3": 1.0, "x3^2": 1.5, "x1*x3": 2.0})
        m0 = p.thickness_moment(0)
        m1 = p.thickness_moment(1)
        self.assertAlmostEqual(float(m0(0.0, 0.0)), 6.0 + 1.0)
        self.assertAlmostEqual(float(m1(0.0, 0.0)), 2.0 / 3.0)
        self.assertAlmostEqual(float(m1(1.0, 0.0)), 2.0 / 3.0 + 4.0 / 3.0)

    def test_restrict_and_config(self):
        """restrict_x3 fixes x3, to_config lists the monomials."""
        p = Polynomial.parse({"x1*x3^2": 2.0})
        self.assertAlmostEqual(float(p.restrict_x3(-1.0)(1.5, 0.0)), 3.0)
        self.assertEqual(p.to_config(), {"x1*x3^2": 2.0})


class TestLoads(unittest.TestCase):
    """Tests for Loads and the thickness reduction."""

    def setUp(self):
        """Unit plate clamped on the left."""
        self.mesh = PlateMesh.rectangle(2, 2, clamped_edges=("left",))

    def test_defaults(self):
        """Omitted loads are zero polynomials."""
        loads = Loads()
        self.assertTrue(all(p.is_zero for p in loads.f))
        self.assertTrue(loads.phi_c.is_zero)
        self.assertEqual(loads.G, 0.0)

    def test_rejects_negative_circuit_constants(self):
        """G and G1 must be nonnegative."""
        with self.assertRaises(ConfigurationError):
            Loads(G1=-1.0)

    def test_rejects_unknown_edge(self):
        """Edge names are left, right, bottom and top."""
        with self.assertRaises(ConfigurationError):
            Loads(g_edges={"front": (0.0, 0.0, 1.0)})

    def test_reduction(self):
        """Membrane forces, moments and transverse force through the thickness."""
        loads = Loads(
            f=({"1": 1.0, "x3": 3.0}, 0.0, 2.0),
            g_top=(0.5, 0.0, {"x3": 1.0}),
            g_bottom=(0.25, 0.0, 1.0),
        )
        reduced = reduce_loads(loads, self.mesh)
        self.assertAlmostEqual(float(reduced.F[0](0.0, 0.0)), 2.0 + 0.5 + 0.25)
        self.assertAlmostEqual(float(reduced.M[0](0.0, 0.0)), -2.0 - 0.5 + 0.25)
        self.assertAlmostEqual(float(reduced.F3(0.0, 0.0)), 4.0 + 1.0 + 1.0)
        self.assertTrue(reduced.F[1].is_zero)

    def test_edge_reduction(self):
        """Lateral forces reduce to line forces and line moments."""
        loads = Loads(g_edges={"right": ({"x3": 1.5}, 1.0, 2.0)})
        edge = reduce_loads(loads, self.mesh).edges["right"]
        self.assertTrue(edge.N[0].is_zero)
        self.assertAlmostEqual(float(edge.m[0](0.0, 0.0)), -1.0)
        self.assertAlmostEqual(float(edge.N[1](0.0, 0.0)), 2.0)
        self.assertAlmostEqual(float(edge.n3(0.0, 0.0)), 4.0)

    def test_lateral_force_on_clamped_edge(self):
        """Lateral forces on a clamped edge are rejected."""
        with self.assertRaises(ConfigurationError):
            reduce_loads(Loads(g_edges={"left": (1.0, 0.0, 0.0)}), self.mesh)

    def test_linear_combinations(self):
        """scaled and + combine every load component."""
        a = Loads(f=(1.0, 0.0, 0.0), phi_c=1.0)
        b = Loads(f=(0.0, 0.0, 2.0), g_edges={"top": (0.0, 1.0, 0.0)})
        c = a.scaled(2.0) + b
        self.assertAlmostEqual(float(c.f[0](0.0, 0.0)), 2.0)
        self.assertAlmostEqual(float(c.f[2](0.0, 0.0)), 2.0)
        self.assertAlmostEqual(float(c.phi_c(0.0, 0.0)), 2.0)
        self.assertAlmostEqual(float(c.g_edges["top"][1](0.0, 0.0)), 1.0)


if __name__ == "__main__":
    unittest.main()
