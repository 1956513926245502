#!/usr/bin/env python

"""Tests for material module."""

import unittest

import numpy as np
from scipy.optimize import minimize

from piezoplate.cell2d import EffectiveTensorsThin
from piezoplate.common import (
    DegenerateCircuitError,
    DegenerateMaterialError,
    MaterialValidationError,
    inplane_mandel,
)
from piezoplate.material import (
    ElasticTensor,
    PermittivityTensor,
    PhaseMaterial,
    PiezoTensor,
    assemble_global_tensor,
    circuit_denominator,
    condense,
    local_reduction,
    pack_m_vector,
    unpack_m_vector,
    validate_material,
)

PIEZO_ROWS = [
    [0.0, 0.0, 0.0, 0.0, 0.3, 0.0],
    [0.0, 0.0, 0.0, 0.3, 0.0, 0.0],
    [-0.2, -0.2, 0.4, 0.0, 0.0, 0.0],
]


def isotropic_phase(lam=1.0, mu=1.0, piezo=False, electric=True):
    return (
        ElasticTensor.isotropic(lam, mu),
        PiezoTensor.from_voigt(PIEZO_ROWS) if piezo else PiezoTensor(),
        PermittivityTensor(np.eye(3)) if electric else PermittivityTensor(),
    )


def random_membrane(rng):
    """Random (2, 2, 2, 2) tensor whose Mandel matrix is SPD."""
    B = rng.normal(size=(3, 3))
    mandel = B @ B.T + 0.1 * np.eye(3)
    index = [0, 2, 2, 1]
    scale = np.array([1.0, 1.0, np.sqrt(2.0)])[index]
    packed = mandel[np.ix_(index, index)] / np.outer(scale, scale)
    return packed.reshape(2, 2, 2, 2)


def random_thin_tensors(rng):
    d = rng.normal(size=(2, 2))
    d = 0.5 * (d + d.T)
    R = random_membrane(rng)
    return EffectiveTensorsThin(
        R, R, d, -d, rng.uniform(0.1, 2.0), rng.uniform(0.05, 0.95)
    )


def mandel_of(tensor):
    return inplane_mandel(np.asarray(tensor).reshape(4, 4))


class TestTensors(unittest.TestCase):
    """Tests for the constitutive tensor types."""

    def test_isotropic_voigt_entries(self):
        """Isotropic stiffness has lambda + 2 mu, lambda and mu in Voigt form."""
        voigt = ElasticTensor.isotropic(2.0, 3.0).voigt()
        self.assertAlmostEqual(voigt[0, 0], 8.0)
        self.assertAlmostEqual(voigt[0, 1], 2.0)
        self.assertAlmostEqual(voigt[3, 3], 3.0)
        self.assertAlmostEqual(voigt[0, 3], 0.0)

    def test_from_voigt_recovers_matrix(self):
        """from_voigt fills all symmetric images of the 21 entries."""
        voigt = ElasticTensor.isotropic(1.0, 2.0).voigt()
        entries = voigt[np.triu_indices(6)]
        rebuilt = ElasticTensor.from_voigt(entries)
        np.testing.assert_allclose(rebuilt.voigt(), voigt)
        np.testing.assert_allclose(rebuilt.R, rebuilt.R.transpose(1, 0, 2, 3))

    def test_from_voigt_rejects_wrong_size(self):
        """A Voigt list of the wrong length is a ValueError."""
        with self.assertRaises(ValueError):
            ElasticTensor.from_voigt(range(20))
        with self.assertRaises(ValueError):
            PiezoTensor.from_voigt(range(17))

    def test_piezo_from_voigt_symmetric(self):
        """Piezo entries are symmetric in the last two indices."""
        d = PiezoTensor.from_voigt(PIEZO_ROWS).d
        self.assertEqual(d[0, 0, 2], 0.3)
        self.assertEqual(d[0, 2, 0], 0.3)
        self.assertEqual(d[2, 2, 2], 0.4)

    def test_tensors_are_read_only(self):
        """Stored arrays cannot be modified in place."""
        R = ElasticTensor.isotropic(1.0, 1.0)
        with self.assertRaises(ValueError):
            R.R[0, 0, 0, 0] = 5.0


class TestValidation(unittest.TestCase):
    """Tests for validate_material and assemble_global_tensor."""

    def test_valid_inclusion(self):
        """An isotropic piezoelectric inclusion with c = I passes."""
        report = validate_material(*isotropic_phase(piezo=True))
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.electric_margin, 1.0)
        self.assertEqual(report.failures(), [])

    def test_matrix_phase_must_be_passive(self):
        """A matrix phase with d or c nonzero is flagged."""
        report = validate_material(*isotropic_phase(piezo=True), phase="matrix")
        self.assertFalse(report.passed)
        self.assertFalse(report.phase_flags["piezo_zero"])
        self.assertFalse(report.phase_flags["permittivity_zero"])

    def test_noncoercive_elasticity(self):
        """A negative shear modulus gives a negative elastic margin."""
        report = validate_material(*isotropic_phase(1.0, -1.0))
        self.assertFalse(report.coercive)
        self.assertTrue(any("coercive" in m for m in report.failures()))

    def test_symmetry_violation_raises(self):
        """assemble_global_tensor rejects a stiffness without major symmetry."""
        R = np.array(ElasticTensor.isotropic(1.0, 1.0).R)
        R[0, 0, 1, 1] += 0.5
        _, d, c = isotropic_phase()
        with self.assertRaises(MaterialValidationError):
            assemble_global_tensor(ElasticTensor(R), d, c)
        report = validate_material(ElasticTensor(R), d, c)
        self.assertTrue(report.symmetry_violations)

    def test_global_tensor_structure(self):
        """The piezo blocks carry opposite signs and c sits in the corner."""
        R10 = assemble_global_tensor(*isotropic_phase(piezo=True)).matrix
        np.testing.assert_allclose(R10[:7, 7:], -R10[7:, :7].T)
        np.testing.assert_allclose(R10[7:, 7:], np.eye(3))
        np.testing.assert_allclose(R10[:7, :7], R10[:7, :7].T)
        # K13 row carries the factor 2, the (K13, K13) entry the factor 4
        self.assertAlmostEqual(R10[4, 4], 4.0)

    def test_energy_identity(self):
        """M . R10 . M equals R s:s + c L.L for random fields."""
        rng = np.random.default_rng(42)
        R = ElasticTensor.isotropic(0.7, 1.9)
        d = PiezoTensor.from_voigt(rng.normal(size=18))
        c = PermittivityTensor(2.0 * np.eye(3))
        R10 = assemble_global_tensor(R, d, c).matrix
        for _ in range(1000):
            s = rng.normal(size=(3, 3))
            s = s + s.T
            L = rng.normal(size=3)
            M = pack_m_vector(s, L)
            expected = np.einsum("ijkl,ij,kl->", R.R, s, s) + L @ c.c @ L
            gap = abs(M @ R10 @ M - expected)
            self.assertLessEqual(gap, 1e-12 * max(1.0, expected))

    def test_pack_unpack(self):
        """unpack_m_vector inverts pack_m_vector."""
        s = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
        L = np.array([7.0, 8.0, 9.0])
        s2, L2 = unpack_m_vector(pack_m_vector(s, L))
        np.testing.assert_array_equal(s2, s)
        np.testing.assert_array_equal(L2, L)

    def test_phase_material(self):
        """PhaseMaterial wraps validation and assembly."""
        phase = PhaseMaterial("inclusion", *isotropic_phase(piezo=True))
        self.assertTrue(phase.validate().passed)
        self.assertTrue(phase.global_tensor().is_electric)
        passive = PhaseMaterial("matrix", ElasticTensor.isotropic(1.0, 1.0))
        self.assertTrue(passive.validate().passed)
        self.assertFalse(passive.global_tensor().is_electric)


class TestCondensation(unittest.TestCase):
    """Tests for condense and the circuit reductions."""

    def test_isotropic_condensation(self):
        """lambda = mu = 1 condenses to the plane-stress values (8/3, 2/3, 1)."""
        ct = condense(assemble_global_tensor(*isotropic_phase()))
        for block in (ct.membrane, ct.flexion):
            self.assertAlmostEqual(block[0, 0], 8.0 / 3.0, delta=1e-12)
            self.assertAlmostEqual(block[3, 3], 8.0 / 3.0, delta=1e-12)
            self.assertAlmostEqual(block[0, 3], 2.0 / 3.0, delta=1e-12)
            self.assertAlmostEqual(block[1, 1], 1.0, delta=1e-12)
            self.assertAlmostEqual(block[1, 2], 1.0, delta=1e-12)
        self.assertAlmostEqual(ct.permittivity, 1.0, delta=1e-12)
        np.testing.assert_allclose(ct.piezo, 0.0, atol=1e-14)

    def test_schur_complement_oracle(self):
        """Condensed tensors equal the Schur complements of the eliminated blocks."""
        R10 = assemble_global_tensor(*isotropic_phase(2.0, 1.5, piezo=True)).matrix
        keep_m = [0, 1, 2, 3, 7, 8, 9]
        drop_m = [4, 5, 6]
        eliminated = np.linalg.solve(
            R10[np.ix_(drop_m, drop_m)], R10[np.ix_(drop_m, keep_m)]
        )
        schur = R10[np.ix_(keep_m, keep_m)] - R10[np.ix_(keep_m, drop_m)] @ eliminated
        ct = condense(assemble_global_tensor(*isotropic_phase(2.0, 1.5, piezo=True)))
        np.testing.assert_allclose(ct.R_M[np.ix_(keep_m, keep_m)], schur, atol=1e-12)
        np.testing.assert_allclose(ct.R_M[drop_m], 0.0, atol=1e-12)

    def test_flexion_eliminates_field(self):
        """The flexion tensor has no L3 row or column left."""
        ct = condense(assemble_global_tensor(*isotropic_phase(piezo=True)))
        np.testing.assert_allclose(ct.R_N[9], 0.0, atol=1e-12)
        np.testing.assert_allclose(ct.R_N[:, 9], 0.0, atol=1e-12)

    def test_electric_free_phase(self):
        """Without c and d only the mechanical transverse components go."""
        ct = condense(assemble_global_tensor(*isotropic_phase(electric=False)))
        self.assertAlmostEqual(ct.membrane[0, 0], 8.0 / 3.0, delta=1e-12)
        self.assertEqual(ct.permittivity, 0.0)
        np.testing.assert_array_equal(ct.R_M[9], 0.0)

    def test_admittance_shift(self):
        """G adds 2G to c_M33 and leaves the flexion tensor alone."""
        R10 = assemble_global_tensor(*isotropic_phase())
        base, shifted = condense(R10), condense(R10, G=0.5)
        self.assertAlmostEqual(shifted.permittivity, 2.0, delta=1e-12)
        np.testing.assert_allclose(shifted.R_N, base.R_N)

    def test_negative_admittance(self):
        """G < 0 is rejected."""
        with self.assertRaises(ValueError):
            condense(assemble_global_tensor(*isotropic_phase()), G=-1.0)

    def test_degenerate_block(self):
        """A zero tensor cannot be condensed."""
        zero = assemble_global_tensor(
            ElasticTensor(np.zeros((3, 3, 3, 3))), PiezoTensor(), PermittivityTensor()
        )
        with self.assertRaises(DegenerateMaterialError):
            condense(zero)

    def test_scaling(self):
        """Condensation is homogeneous of degree one."""
        R10 = assemble_global_tensor(*isotropic_phase(piezo=True))
        np.testing.assert_allclose(
            condense(R10.scaled(3.0)).R_M, 3.0 * condense(R10).R_M, atol=1e-12
        )

    def test_condensation_maps_are_projections(self):
        """I + T is idempotent and leaves the condensed tensor unchanged."""
        R10 = assemble_global_tensor(*isotropic_phase(2.0, 1.5, piezo=True))
        ct = condense(R10)
        identity = np.eye(10)
        for T in (ct.T_M, ct.T_N):
            P = identity + T
            np.testing.assert_allclose(P @ P, P, atol=1e-12)
        P = identity + ct.T_M
        np.testing.assert_allclose(P.T @ ct.R_M @ P, ct.R_M, atol=1e-12)

    def test_condensation_minimizes_energy(self):
        """The condensed membrane energy is the minimum over transverse strains."""
        rng = np.random.default_rng(7)
        B = rng.normal(size=(6, 6))
        voigt = B @ B.T + np.eye(6)
        R = ElasticTensor.from_voigt(voigt[np.triu_indices(6)])
        R10 = assemble_global_tensor(R, PiezoTensor(), PermittivityTensor())
        membrane = condense(R10).membrane
        matrix = np.asarray(R10.matrix)
        for _ in range(5):
            inplane = rng.normal(size=4)
            inplane[2] = inplane[1]

            def energy(transverse):
                M = np.concatenate([inplane, transverse, np.zeros(3)])
                return M @ matrix @ M, 2.0 * (matrix @ M)[4:7]

            best = minimize(energy, np.zeros(3), jac=True, method="BFGS")
            expected = inplane @ membrane @ inplane
            self.assertAlmostEqual(best.fun, expected, delta=1e-8 * max(1.0, expected))


class TestLocalReduction(unittest.TestCase):
    """Properties of R_M^{H,loc} over random effective tensors."""

    def test_random_spd_sweep(self):
        """R_M^{H,loc} stays symmetric and positive definite, above R_M^H."""
        rng = np.random.default_rng(2024)
        for _ in range(50):
            E5 = random_thin_tensors(rng)
            G = rng.uniform(0.0, 5.0)
            reduced = mandel_of(local_reduction(E5, G))
            base = mandel_of(E5.R_M_H)
            np.testing.assert_allclose(reduced, reduced.T, atol=1e-12)
            self.assertGreater(np.linalg.eigvalsh(reduced)[0], 0.0)
            self.assertGreaterEqual(np.linalg.eigvalsh(reduced - base)[0], -1e-12)

    def test_monotone_in_admittance(self):
        """A larger G gives a smaller tensor in the Loewner order."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            E5 = random_thin_tensors(rng)
            values = [mandel_of(local_reduction(E5, G)) for G in (0.0, 0.5, 2.0, 8.0)]
            for a, b in zip(values, values[1:]):
                self.assertGreaterEqual(np.linalg.eigvalsh(a - b)[0], -1e-12)

    def test_large_admittance_limit(self):
        """As G grows the reduced tensor approaches R_M^H monotonically."""
        E5 = random_thin_tensors(np.random.default_rng(5))
        base = np.asarray(E5.R_M_H)
        gaps = [
            np.abs(local_reduction(E5, G) - base).max()
            for G in (1.0, 1e1, 1e2, 1e3, 1e4, 1e6)
        ]
        for a, b in zip(gaps, gaps[1:]):
            self.assertLess(b, a)
        self.assertLess(gaps[-1], 1e-4 * gaps[0])

    def test_local_reduction_scalar(self):
        """R - d e / (c + 2|Y1|G) for scalar-like data gives 1/3."""
        R = np.zeros((2, 2, 2, 2))
        d = np.array([[1.0, 0.0], [0.0, 0.0]])
        E5 = EffectiveTensorsThin(R, R, d, -d, 1.0, 1.0)
        reduced = local_reduction(E5, 1.0)
        self.assertAlmostEqual(reduced[0, 0, 0, 0], 1.0 / 3.0, delta=1e-14)
        self.assertEqual(reduced[1, 1, 1, 1], 0.0)

    def test_circuit_denominator(self):
        """The denominator must be positive."""
        self.assertAlmostEqual(circuit_denominator(1.0, 0.5, 0.25), 1.25)
        with self.assertRaises(DegenerateCircuitError):
            circuit_denominator(0.0, 0.0, 0.5)
        with self.assertRaises(DegenerateCircuitError):
            circuit_denominator(-1.0, 0.25, 1.0)


if __name__ == "__main__":
    unittest.main()
