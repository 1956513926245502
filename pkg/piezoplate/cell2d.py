"""Thin-regime cell problems on Y and the effective plate tensors.

Each phase is condensed once (transverse strains eliminated, see
`material.condense`), which leaves purely in-plane periodic problems:
membrane correctors in the Q1 vector space, flexion correctors in the BFS
space and one piezoelectric corrector driven by d_M3.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import femcore
from .common import LOADING_INDEX, LOADINGS, as_plain
from .material import condense

logger = logging.getLogger(__name__)

MEMBRANE = femcore.BilinearForm("sym_grad", "sym_grad")
FLEXION = femcore.BilinearForm("hessian", "hessian")
PACKED_LABELS = ("11", "12", "21", "22")


def unit_loading(label):
    """Packed unit loading E^{label}; E^{12} and E^{21} share a corrector."""
    loading = np.zeros(4)
    loading[LOADING_INDEX[label]] = 1.0
    return loading


@dataclass(frozen=True, eq=False)
class CondensedFieldY:
    """Per-element condensed tensors on a 2D cell mesh.

    Attributes:
        R_M (np.ndarray): Membrane tensors, (ne, 4, 4) in (11, 12, 21, 22) packing.
        R_N (np.ndarray): Flexion tensors, (ne, 4, 4).
        d_M3 (np.ndarray): Piezoelectric coupling d_M3ab, (ne, 4).
        c_M33 (np.ndarray): Transverse permittivity, (ne,).
    """

    R_M: np.ndarray
    R_N: np.ndarray
    d_M3: np.ndarray
    c_M33: np.ndarray

    @classmethod
    def from_phases(cls, mesh, matrix, inclusion):
        """Builds the field from the condensed tensors of both phases.

        Args:
            mesh (PeriodicMesh2D): Tagged cell mesh.
            matrix (CondensedTensors): Matrix phase.
            inclusion (CondensedTensors): Inclusion phase.
        """
        tags = mesh.inclusion

        def pick(attribute):
            a = np.asarray(getattr(matrix, attribute))
            b = np.asarray(getattr(inclusion, attribute))
            shape = (tags.size,) + (1,) * a.ndim
            return np.where(tags.reshape(shape), b, a)

        return cls(
            R_M=pick("membrane"),
            R_N=pick("flexion"),
            d_M3=pick("piezo"),
            c_M33=pick("permittivity"),
        )

    @classmethod
    def from_global_tensors(cls, mesh, matrix, inclusion):
        """Condenses both phases (with G = 0) and builds the field."""
        return cls.from_phases(mesh, condense(matrix), condense(inclusion))

    @classmethod
    def uniform(cls, mesh, condensed):
        return cls.from_phases(mesh, condensed, condensed)

    def scaled(self, factor):
        return CondensedFieldY(
            factor * self.R_M,
            factor * self.R_N,
            factor * self.d_M3,
            factor * self.c_M33,
        )


@dataclass(eq=False)
class CellCorrectors2D:
    """Raw DOF vectors of the 2D correctors and the spaces they live in."""

    membrane: dict
    flexion: dict
    piezo: np.ndarray
    membrane_space: femcore.FESpace
    flexion_space: femcore.FESpace
    residuals: dict


def membrane_space(mesh):
    return femcore.q1_space(mesh, ncomp=2, mean_zero=True)


def flexion_space(mesh):
    return femcore.bfs_space(mesh, mean_zero=True)


def _solve(form, space, coeff, loads):
    system = femcore.assemble(form, space, coeff, load=np.column_stack(loads))
    u, residual = femcore.solve(system, symmetry="spd", return_residual=True)
    return [space.expand(u[:, k]) for k in range(u.shape[1])], residual


def solve_membrane_correctors(field, mesh, space=None):
    """Solves the three membrane cell problems.

    For each loading E^{gd} the corrector u satisfies
    int S(v) R_M S(u) = -int S(v) R_M E^{gd} for all periodic v.

    Returns:
        tuple: dict of raw corrector vectors keyed "11", "22", "12", and the
        relative residual.
    """
    space = membrane_space(mesh) if space is None else space
    loads = [
        -femcore.assemble_vector("sym_grad", space, field.R_M @ unit_loading(label))
        for label in LOADINGS
    ]
    solutions, residual = _solve(MEMBRANE, space, field.R_M, loads)
    logger.info("Membrane correctors solved, residual %.2e", residual)
    return dict(zip(LOADINGS, solutions)), residual


def solve_flexion_correctors(field, mesh, space=None):
    """Solves the three flexion cell problems in the periodic BFS space."""
    space = flexion_space(mesh) if space is None else space
    loads = [
        -femcore.assemble_vector("hessian", space, field.R_N @ unit_loading(label))
        for label in LOADINGS
    ]
    solutions, residual = _solve(FLEXION, space, field.R_N, loads)
    logger.info("Flexion correctors solved, residual %.2e", residual)
    return dict(zip(LOADINGS, solutions)), residual


def solve_piezo_corrector(field, mesh, space=None):
    """Solves int S(v) R_M S(u) = -int d_M3 : S(v) for the piezo corrector."""
    space = membrane_space(mesh) if space is None else space
    load = -femcore.assemble_vector("sym_grad", space, field.d_M3)
    (solution,), residual = _solve(MEMBRANE, space, field.R_M, [load])
    logger.info("Piezo corrector solved, residual %.2e", residual)
    return solution, residual


def solve_cell_problems(field, mesh, max_workers=3):
    """Runs the membrane, flexion and piezo solves concurrently.

    Args:
        field (CondensedFieldY): Condensed tensors.
        mesh (PeriodicMesh2D): Cell mesh.
        max_workers (int): Thread pool size; 1 runs them in turn.

    Returns:
        CellCorrectors2D: All seven correctors.
    """
    m_space = membrane_space(mesh)
    f_space = flexion_space(mesh)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        membrane = executor.submit(solve_membrane_correctors, field, mesh, m_space)
        flexion = executor.submit(solve_flexion_correctors, field, mesh, f_space)
        piezo = executor.submit(solve_piezo_corrector, field, mesh, m_space)
        (m, m_res), (f, f_res), (p, p_res) = (
            membrane.result(),
            flexion.result(),
            piezo.result(),
        )
    return CellCorrectors2D(
        membrane=m,
        flexion=f,
        piezo=p,
        membrane_space=m_space,
        flexion_space=f_space,
        residuals={"membrane": m_res, "flexion": f_res, "piezo": p_res},
    )


@dataclass(frozen=True, eq=False)
class EffectiveTensorsThin:
    """Effective tensors of the thin-regime plate model.

    Attributes:
        R_N_H (np.ndarray): Bending tensor (2, 2, 2, 2).
        R_M_H (np.ndarray): Membrane tensor (2, 2, 2, 2).
        d_M3_H (np.ndarray): (2, 2) coupling in the membrane equation.
        e_M3_H (np.ndarray): (2, 2) coupling in the voltage equation.
        c_M33_H (float): Transverse permittivity.
        vol_Y1 (float): Inclusion area |Y1|.
    """

    R_N_H: np.ndarray
    R_M_H: np.ndarray
    d_M3_H: np.ndarray
    e_M3_H: np.ndarray
    c_M33_H: float
    vol_Y1: float

    KEYS = ("R_N_H", "R_M_H", "d_M3_H", "e_M3_H", "c_M33_H", "vol_Y1")

    def __post_init__(self):
        for key, shape in (
            ("R_N_H", (2, 2, 2, 2)),
            ("R_M_H", (2, 2, 2, 2)),
            ("d_M3_H", (2, 2)),
            ("e_M3_H", (2, 2)),
        ):
            object.__setattr__(
                self, key, np.asarray(getattr(self, key), dtype=float).reshape(shape)
            )
        object.__setattr__(self, "c_M33_H", float(self.c_M33_H))
        object.__setattr__(self, "vol_Y1", float(self.vol_Y1))

    @classmethod
    def from_condensed(cls, condensed, vol_Y1):
        """Tensors of a constant field: zero correctors, e^H = -d_M."""
        return cls(
            R_N_H=condensed.flexion,
            R_M_H=condensed.membrane,
            d_M3_H=condensed.piezo,
            e_M3_H=-condensed.piezo,
            c_M33_H=condensed.permittivity,
            vol_Y1=vol_Y1,
        )

    def packed(self, key):
        """Returns one tensor in the packed (11, 12, 21, 22) form."""
        value = getattr(self, key)
        return value.reshape(4, 4) if value.ndim == 4 else value.reshape(4)

    def to_dict(self):
        """Plain nested lists in the fixed key order."""
        return {key: as_plain(getattr(self, key)) for key in self.KEYS}

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: data[key] for key in cls.KEYS})

    def scaled(self, factor):
        return EffectiveTensorsThin(
            factor * self.R_N_H,
            factor * self.R_M_H,
            factor * self.d_M3_H,
            factor * self.e_M3_H,
            factor * self.c_M33_H,
            self.vol_Y1,
        )


def _generalized_strains(space, correctors, operator):
    """E^a + operator(u^a) at quadrature points for a in (11, 12, 21, 22)."""
    strains = []
    for label in PACKED_LABELS:
        key = "12" if label == "21" else label
        gradient = femcore.evaluate(space, correctors[key], operator)
        strains.append(unit_loading(label) + gradient)
    return np.stack(strains)


def effective_tensors_thin(correctors, field, mesh):
    """Averages corrector-augmented energies into the effective tensors.

    R_N^H = int (E + d2 u_N) R_N (E + d2 u_N), R_M^H likewise with S(u_M);
    with the piezo corrector u3,
    d^H = int (E + S(u_M)) (R_M S(u3) + d_M3),
    e^H = int (S(u3) R_M - d_M3) (E + S(u_M)),
    c^H = int S(u3) R_M S(u3) + c_M33.

    Args:
        correctors (CellCorrectors2D): Solved correctors.
        field (CondensedFieldY): Field they were solved for.
        mesh (PeriodicMesh2D): Cell mesh.

    Returns:
        EffectiveTensorsThin: The effective tensors.
    """
    m_space, f_space = correctors.membrane_space, correctors.flexion_space
    m_order = m_space.element.quadrature_order
    f_order = f_space.element.quadrature_order
    _, m_weights = femcore.quadrature_points(mesh, m_order)
    _, f_weights = femcore.quadrature_points(mesh, f_order)

    G_M = _generalized_strains(m_space, correctors.membrane, "sym_grad")
    G_N = _generalized_strains(f_space, correctors.flexion, "hessian")
    S3 = femcore.evaluate(m_space, correctors.piezo, "sym_grad")

    R_M_H = np.einsum("aeqi,eij,beqj,q->ab", G_M, field.R_M, G_M, m_weights)
    R_N_H = np.einsum("aeqi,eij,beqj,q->ab", G_N, field.R_N, G_N, f_weights)
    stress3 = np.einsum("eij,eqj->eqi", field.R_M, S3)
    d_H = np.einsum("aeqi,eqi,q->a", G_M, stress3 + field.d_M3[:, None, :], m_weights)
    e_H = np.einsum("eqi,aeqi,q->a", stress3 - field.d_M3[:, None, :], G_M, m_weights)
    c_H = np.einsum("eqi,eqi,q->", S3, stress3, m_weights) + np.sum(
        field.c_M33 * np.sum(m_weights)
    )
    return EffectiveTensorsThin(
        R_N_H=R_N_H,
        R_M_H=R_M_H,
        d_M3_H=d_H,
        e_M3_H=e_H,
        c_M33_H=c_H,
        vol_Y1=mesh.vol_Y1,
    )


def homogenize_thin(mesh, matrix, inclusion, max_workers=3):
    """Condenses both phases, solves the cell problems and averages.

    Returns:
        tuple: (EffectiveTensorsThin, CellCorrectors2D).
    """
    field = CondensedFieldY.from_global_tensors(mesh, matrix, inclusion)
    correctors = solve_cell_problems(field, mesh, max_workers=max_workers)
    return effective_tensors_thin(correctors, field, mesh), correctors
