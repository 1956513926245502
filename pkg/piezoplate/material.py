"""Constitutive tensors, the packed 10x10 global tensor and transverse condensation.

The packed strain/field vector is ordered (K11, K12, K21, K22, K13, K23, K33,
L1, L2, L3). The global tensor stores the factors 2 and 4 of the (alpha 3)
rows and columns, so that for a packed vector M built from a symmetric strain
s (with K_a3 = s_a3) and a field L the quadratic form M.R10.M equals
R s:s + c L.L exactly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .common import (
    ELECTRIC,
    MECHANICAL_PAIRS,
    PI,
    PI1,
    PI2,
    DegenerateCircuitError,
    DegenerateMaterialError,
    MaterialValidationError,
)

logger = logging.getLogger(__name__)

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
SYMMETRY_TOLERANCE = 1e-12
PIVOT_TOLERANCE = 1e-12
_MECHANICAL_FACTORS = np.array([1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0])


def _frozen_array(values, shape, name):
    array = np.array(values, dtype=float)
    if array.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ElasticTensor:
    """Fourth-order stiffness tensor R_ijkl.

    Args:
        R (array_like): Entries with shape (3, 3, 3, 3).
    """

    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _frozen_array(self.R, (3, 3, 3, 3), "R"))

    @classmethod
    def isotropic(cls, lam, mu):
        """Builds R_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk).

        Args:
            lam (float): First Lame parameter.
            mu (float): Shear modulus.

        Returns:
            ElasticTensor: The isotropic tensor.
        """
        eye = np.eye(3)
        R = lam * np.einsum("ij,kl->ijkl", eye, eye) + mu * (
            np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye)
        )
        return cls(R)

    @classmethod
    def from_voigt(cls, entries):
        """Builds the tensor from the 21 upper-triangle entries of the Voigt matrix.

        Args:
            entries (sequence): 21 numbers, row by row, in the Voigt order
                (11, 22, 33, 23, 13, 12).

        Returns:
            ElasticTensor: The tensor with all minor and major symmetries.
        """
        entries = np.asarray(entries, dtype=float).ravel()
        if entries.size != 21:
            raise ValueError(f"R needs 21 Voigt entries, got {entries.size}")
        voigt = np.zeros((6, 6))
        voigt[np.triu_indices(6)] = entries
        voigt = voigt + np.triu(voigt, 1).T
        R = np.zeros((3, 3, 3, 3))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, m) in enumerate(VOIGT_PAIRS):
                for a, b in {(i, j), (j, i)}:
                    for c, d in {(k, m), (m, k)}:
                        R[a, b, c, d] = voigt[I, J]
        return cls(R)

    def voigt(self):
        """Returns the 6x6 Voigt matrix."""
        return np.array(
            [[self.R[i, j, k, m] for (k, m) in VOIGT_PAIRS] for (i, j) in VOIGT_PAIRS]
        )

    def mandel(self):
        """Returns the 6x6 Mandel matrix (shear rows and columns scaled by sqrt 2)."""
        weights = np.array([1.0, 1.0, 1.0] + [np.sqrt(2.0)] * 3)
        return self.voigt() * weights[:, None] * weights[None, :]


@dataclass(frozen=True)
class PiezoTensor:
    """Third-order piezoelectric tensor d_kij."""

    d: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen_array(self.d, (3, 3, 3), "d"))

    @classmethod
    def from_voigt(cls, entries):
        """Builds the tensor from a 3x6 matrix given row by row (18 entries).

        Row k holds d_k in the Voigt order (11, 22, 33, 23, 13, 12); shear
        columns are the tensor entries d_kij themselves, without factors.
        """
        entries = np.asarray(entries, dtype=float).ravel()
        if entries.size != 18:
            raise ValueError(f"d needs 18 entries, got {entries.size}")
        matrix = entries.reshape(3, 6)
        d = np.zeros((3, 3, 3))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            d[:, i, j] = matrix[:, I]
            d[:, j, i] = matrix[:, I]
        return cls(d)


@dataclass(frozen=True)
class PermittivityTensor:
    """Second-order permittivity tensor c_ij."""

    c: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen_array(self.c, (3, 3), "c"))

    @classmethod
    def from_voigt(cls, entries):
        """Builds the tensor from the entries (11, 22, 33, 23, 13, 12)."""
        entries = np.asarray(entries, dtype=float).ravel()
        if entries.size != 6:
            raise ValueError(f"c needs 6 entries, got {entries.size}")
        c = np.zeros((3, 3))
        for value, (i, j) in zip(entries, VOIGT_PAIRS):
            c[i, j] = c[j, i] = value
        return cls(c)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of `validate_material`.

    Attributes:
        symmetry_violations (list): One message per violated symmetry.
        elastic_margin (float): Smallest eigenvalue of R on symmetric matrices.
        electric_margin (float): Smallest eigenvalue of c.
        phase_flags (dict): Phase-consistency checks by name.
    """

    symmetry_violations: list
    elastic_margin: float
    electric_margin: float
    phase_flags: dict

    @property
    def coercive(self):
        return self.elastic_margin > 0.0

    @property
    def passed(self):
        return (
            not self.symmetry_violations
            and self.coercive
            and all(self.phase_flags.values())
        )

    def failures(self):
        """Lists every failed check as a message."""
        messages = list(self.symmetry_violations)
        if not self.coercive:
            messages.append(
                f"elastic tensor not coercive (margin {self.elastic_margin:.3e})"
            )
        messages.extend(
            f"phase check failed: {name}"
            for name, ok in self.phase_flags.items()
            if not ok
        )
        return messages


@dataclass(frozen=True)
class GlobalTensor10:
    """The packed 10x10 stiffness-piezoelectricity-permittivity matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", _frozen_array(self.matrix, (10, 10), "matrix")
        )

    @property
    def is_electric(self):
        """False when every row and column touching (L1, L2, L3) vanishes."""
        electric = list(ELECTRIC)
        return bool(
            np.any(self.matrix[electric, :] != 0.0)
            or np.any(self.matrix[:, electric] != 0.0)
        )

    def scaled(self, factor):
        return GlobalTensor10(factor * self.matrix)


@dataclass(frozen=True)
class CondensedTensors:
    """Condensation maps and condensed tensors of one phase.

    Attributes:
        T_M (np.ndarray): Membrane condensation map (eliminates K13, K23, K33).
        T_N (np.ndarray): Flexion condensation map (also eliminates L3).
        R_M (np.ndarray): Membrane tensor, including the 2G shift on L3.
        R_N (np.ndarray): Flexion tensor.
        G (float): Admittance used in R_M.
    """

    T_M: np.ndarray
    T_N: np.ndarray
    R_M: np.ndarray
    R_N: np.ndarray
    G: float = 0.0

    @property
    def membrane(self):
        """In-plane block of R_M in the packed (11, 12, 21, 22) ordering."""
        return self.R_M[:4, :4].copy()

    @property
    def flexion(self):
        """In-plane block of R_N."""
        return self.R_N[:4, :4].copy()

    @property
    def piezo(self):
        """d_M3ab, the (K_ab, L3) column of R_M."""
        return self.R_M[:4, 9].copy()

    @property
    def permittivity(self):
        """c_M33, the (L3, L3) entry of R_M."""
        return float(self.R_M[9, 9])


@dataclass(frozen=True)
class PhaseMaterial:
    """Constitutive data of one material phase."""

    name: str
    elastic: ElasticTensor
    piezo: PiezoTensor = field(default_factory=PiezoTensor)
    permittivity: PermittivityTensor = field(default_factory=PermittivityTensor)

    def validate(self):
        return validate_material(
            self.elastic, self.piezo, self.permittivity, phase=self.name
        )

    def global_tensor(self):
        return assemble_global_tensor(self.elastic, self.piezo, self.permittivity)


def _symmetry_violations(R, d, c):
    violations = []
    scale = max(1.0, float(np.max(np.abs(R))), float(np.max(np.abs(d))))
    tol = SYMMETRY_TOLERANCE * scale
    checks = (
        ("R_ijkl != R_klij", R, R.transpose(2, 3, 0, 1)),
        ("R_ijkl != R_jikl", R, R.transpose(1, 0, 2, 3)),
        ("R_ijkl != R_ijlk", R, R.transpose(0, 1, 3, 2)),
        ("d_kij != d_kji", d, d.transpose(0, 2, 1)),
        ("c_ij != c_ji", c, c.T),
    )
    for label, a, b in checks:
        gap = float(np.max(np.abs(a - b)))
        if gap > tol:
            violations.append(f"{label} (max deviation {gap:.3e})")
    return violations


def validate_material(R, d, c, phase="inclusion"):
    """Checks symmetry, coercivity and phase consistency of one phase.

    Args:
        R (ElasticTensor): Stiffness.
        d (PiezoTensor): Piezoelectric coupling.
        c (PermittivityTensor): Permittivity.
        phase (str): "inclusion" requires c positive definite; any other
            phase name ("matrix") requires d = 0 and c = 0.

    Returns:
        ValidationReport: The report; it never raises.
    """
    violations = _symmetry_violations(R.R, d.d, c.c)
    mandel = R.mandel()
    elastic_margin = float(np.linalg.eigvalsh(0.5 * (mandel + mandel.T))[0])
    electric_margin = float(np.linalg.eigvalsh(0.5 * (c.c + c.c.T))[0])
    if phase == "inclusion":
        flags = {"permittivity_positive_definite": electric_margin > 0.0}
    else:
        flags = {
            "piezo_zero": bool(np.all(d.d == 0.0)),
            "permittivity_zero": bool(np.all(c.c == 0.0)),
        }
    report = ValidationReport(violations, elastic_margin, electric_margin, flags)
    logger.debug("Validated %s phase: passed=%s", phase, report.passed)
    return report


def assemble_global_tensor(R, d, c):
    """Packs (R, d, c) into the 10x10 global tensor.

    Args:
        R (ElasticTensor): Stiffness.
        d (PiezoTensor): Piezoelectric coupling.
        c (PermittivityTensor): Permittivity.

    Returns:
        GlobalTensor10: The packed tensor; +d in the upper and -d in the
        lower off-diagonal block.

    Raises:
        MaterialValidationError: If an input violates its symmetries.
    """
    violations = _symmetry_violations(R.R, d.d, c.c)
    if violations:
        raise MaterialValidationError("; ".join(violations))
    rows = np.array([p[0] for p in MECHANICAL_PAIRS])
    cols = np.array([p[1] for p in MECHANICAL_PAIRS])
    f = _MECHANICAL_FACTORS
    matrix = np.zeros((10, 10))
    matrix[:7, :7] = (
        R.R[rows[:, None], cols[:, None], rows[None, :], cols[None, :]]
        * f[:, None]
        * f[None, :]
    )
    # coupling[A, k] = f_A d_k(ij) for A = (ij)
    coupling = d.d[:, rows, cols].T * f[:, None]
    matrix[:7, 7:] = coupling
    matrix[7:, :7] = -coupling.T
    matrix[7:, 7:] = c.c
    return GlobalTensor10(matrix)


def _condensation_map(matrix, indices):
    indices = list(indices)
    block = matrix[np.ix_(indices, indices)]
    lu, piv = linalg.lu_factor(block)
    pivots = np.abs(np.diag(lu))
    if pivots.max() == 0.0 or pivots.min() < PIVOT_TOLERANCE * pivots.max():
        raise DegenerateMaterialError(
            f"singular condensation block on components {indices}"
        )
    T = np.zeros((10, 10))
    T[indices, :] = -linalg.lu_solve((lu, piv), matrix[indices, :])
    return T


def condense(R10, G=0.0):
    """Eliminates the transverse components of a global tensor.

    T_N = -(Pi R Pi)^-1 Pi R and T_M = -(Pi2 R Pi2)^-1 Pi2 R, with
    R_N = (I + T_N^t) R (I + T_N) and R_M = (I + T_M^t)(R + 2G Pi1)(I + T_M).
    For an electric-free phase only (K13, K23, K33) are eliminated and the
    L3 row and column stay zero.

    Args:
        R10 (GlobalTensor10): Tensor of one phase.
        G (float): Admittance, G >= 0.

    Returns:
        CondensedTensors: Maps and condensed tensors.

    Raises:
        DegenerateMaterialError: If a block to invert is singular.
    """
    if G < 0:
        raise ValueError(f"admittance G must be nonnegative, got {G}")
    matrix = np.asarray(R10.matrix)
    identity = np.eye(10)
    electric = R10.is_electric
    T_N = _condensation_map(matrix, PI if electric else PI2)
    T_M = _condensation_map(matrix, PI2)
    shifted = matrix.copy()
    if electric:
        shifted[PI1[0], PI1[0]] += 2.0 * G
    R_N = (identity + T_N.T) @ matrix @ (identity + T_N)
    R_M = (identity + T_M.T) @ shifted @ (identity + T_M)
    return CondensedTensors(T_M=T_M, T_N=T_N, R_M=R_M, R_N=R_N, G=float(G))


def local_reduction(E5, G, vol_Y1=None):
    """Computes R_M^{H,loc} = R_M^H - d^H (x) e^H / (c^H + 2|Y1|G).

    Args:
        E5 (EffectiveTensorsThin): Thin-regime effective tensors.
        G (float): Admittance of the local circuits.
        vol_Y1 (float, optional): Inclusion area; defaults to E5.vol_Y1.

    Returns:
        np.ndarray: The (2, 2, 2, 2) reduced membrane tensor.

    Raises:
        DegenerateCircuitError: If the denominator is not positive.
    """
    vol = E5.vol_Y1 if vol_Y1 is None else vol_Y1
    denominator = circuit_denominator(E5.c_M33_H, G, vol)
    return np.asarray(E5.R_M_H) - np.einsum(
        "ab,cd->abcd", np.asarray(E5.d_M3_H), np.asarray(E5.e_M3_H)
    ) / denominator


def circuit_denominator(c, G, vol_Y1):
    """Returns c + 2|Y1|G, raising DegenerateCircuitError unless positive."""
    denominator = float(c) + 2.0 * float(vol_Y1) * float(G)
    if not denominator > 0.0:
        raise DegenerateCircuitError(
            f"c + 2|Y1|G = {denominator:.6g} must be positive"
        )
    return denominator


def pack_m_vector(s, L):
    """Packs a symmetric strain s (3x3) and a field L (3,) into a 10-vector.

    The (a3) components carry s_a3 itself; the factor 2 lives in the tensor.
    """
    s = np.asarray(s, dtype=float)
    strain = [s[i, j] for (i, j) in MECHANICAL_PAIRS]
    return np.concatenate([strain, np.asarray(L, dtype=float)])


def unpack_m_vector(M):
    """Inverse of `pack_m_vector`; returns (s, L)."""
    M = np.asarray(M, dtype=float)
    s = np.zeros((3, 3))
    for value, (i, j) in zip(M[:7], MECHANICAL_PAIRS):
        s[i, j] = s[j, i] = value
    return s, M[7:].copy()
