"""Comparable-regime cell problems on Z = Y x (-1, 1) and the effective block tensors.

Unknowns are a Q1 displacement on Z, periodic in y, and a Q1 potential on
the inclusion prism grounded on its top and bottom faces. The coupled form
int M1(V) R10 M1(U) is nonsymmetric (the piezoelectric blocks carry opposite
signs) but coercive, and all seven loadings share one factorization.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import femcore
from .cell2d import PACKED_LABELS
from .common import L3, LOADING_INDEX, LOADINGS, ConfigurationError, as_plain

logger = logging.getLogger(__name__)

COUPLED = femcore.BilinearForm("m1", "m1")
LOADING_TAGS = (
    tuple(f"M{a}" for a in LOADINGS) + tuple(f"N{a}" for a in LOADINGS) + ("E3",)
)


def macroscopic_loading(label):
    """Packed 10-vector E^{label} = (unit in-plane entry, 0_6)."""
    loading = np.zeros(10)
    loading[LOADING_INDEX[label]] = 1.0
    return loading


def electric_loading():
    """b = (0_9, 1)."""
    loading = np.zeros(10)
    loading[L3] = 1.0
    return loading


def global_tensor_field(mesh, matrix, inclusion):
    """Per-element 10x10 tensors, shape (ne, 10, 10).

    Args:
        mesh (PeriodicMesh3D): Tagged mesh.
        matrix (GlobalTensor10): Matrix phase tensor.
        inclusion (GlobalTensor10): Inclusion phase tensor.
    """
    return np.where(
        mesh.inclusion[:, None, None],
        np.asarray(inclusion.matrix),
        np.asarray(matrix.matrix),
    )


@dataclass(eq=False)
class CellSolution3D:
    """One corrector U = (displacement, potential) as raw DOF vectors."""

    loading: str
    raw: np.ndarray
    space: femcore.FESpace
    residual: float

    @property
    def displacement(self):
        return self.raw[: 3 * self.space.mesh.n_nodes].reshape(-1, 3)

    @property
    def potential(self):
        return self.raw[3 * self.space.mesh.n_nodes:]


def _x3(points):
    return points[..., 2]


def _load(space, field, tag):
    """Raw right-hand side of one loading.

    M(ab): -int M1(V) X_ab, N(ab): +int x3 M1(V) X_ab and
    E3: -int M1(V) X_3, with X the matching column of R10; each makes the
    corrector U the minimizer for the generalized strain E + M1(U),
    -x3 E + M1(U) or b + M1(U).
    """
    if tag == "E3":
        return -femcore.assemble_vector("m1", space, field[:, :, L3])
    column = field[:, :, LOADING_INDEX[tag[1:]]]
    if tag[0] == "M":
        return -femcore.assemble_vector("m1", space, column)
    return femcore.assemble_vector("m1", space, column, weight=_x3)


def solve_correctors_3d(field, mesh, loadings=LOADING_TAGS, space=None):
    """Solves the coupled cell problems for several loadings at once.

    Args:
        field (np.ndarray): Per-element global tensors (ne, 10, 10).
        mesh (PeriodicMesh3D): Cell mesh.
        loadings (sequence): Tags among M11, M22, M12, N11, N22, N12, E3.
        space (FESpace, optional): Reuse an existing piezo space.

    Returns:
        dict: CellSolution3D per loading tag.
    """
    unknown = set(loadings) - set(LOADING_TAGS)
    if unknown:
        raise ConfigurationError(f"unknown loadings {sorted(unknown)}")
    space = femcore.piezo_space(mesh) if space is None else space
    field = np.asarray(field, dtype=float)
    loads = np.column_stack([_load(space, field, tag) for tag in loadings])
    system = femcore.assemble(COUPLED, space, field, load=loads)
    logger.info(
        "3D cell system with %d free DOFs, %d loadings", system.n, len(loadings)
    )
    u, residual = femcore.solve(system, symmetry="general", return_residual=True)
    logger.info("3D correctors solved, residual %.2e", residual)
    return {
        tag: CellSolution3D(tag, space.expand(u[:, k]), space, residual)
        for k, tag in enumerate(loadings)
    }


def solve_corrector_3d(field, mesh, loading, space=None):
    """Solves the cell problem of a single loading tag."""
    return solve_correctors_3d(field, mesh, (loading,), space)[loading]


@dataclass(frozen=True, eq=False)
class EffectiveTensorsComparable:
    """Effective block tensors of the comparable-regime plate model."""

    R_MM_H: np.ndarray
    R_MN_H: np.ndarray
    R_NM_H: np.ndarray
    R_NN_H: np.ndarray
    d_MM3_H: np.ndarray
    d_NM3_H: np.ndarray
    e_MM3_H: np.ndarray
    e_MN3_H: np.ndarray
    c_MM33_H: float
    vol_Y1: float

    KEYS = (
        "R_MM_H",
        "R_MN_H",
        "R_NM_H",
        "R_NN_H",
        "d_MM3_H",
        "d_NM3_H",
        "e_MM3_H",
        "e_MN3_H",
        "c_MM33_H",
        "vol_Y1",
    )

    def __post_init__(self):
        for key in self.KEYS[:4]:
            value = np.asarray(getattr(self, key), dtype=float)
            object.__setattr__(self, key, value.reshape(2, 2, 2, 2))
        for key in self.KEYS[4:8]:
            object.__setattr__(
                self, key, np.asarray(getattr(self, key), dtype=float).reshape(2, 2)
            )
        object.__setattr__(self, "c_MM33_H", float(self.c_MM33_H))
        object.__setattr__(self, "vol_Y1", float(self.vol_Y1))

    @classmethod
    def from_thin(cls, E5):
        """Constant-coefficient blocks: R_MM = 2 R_M, R_NN = (2/3) R_N, no coupling."""
        zero4 = np.zeros((2, 2, 2, 2))
        zero2 = np.zeros((2, 2))
        return cls(
            R_MM_H=2.0 * E5.R_M_H,
            R_MN_H=zero4,
            R_NM_H=zero4,
            R_NN_H=(2.0 / 3.0) * E5.R_N_H,
            d_MM3_H=2.0 * E5.d_M3_H,
            d_NM3_H=zero2,
            e_MM3_H=2.0 * E5.e_M3_H,
            e_MN3_H=zero2,
            c_MM33_H=2.0 * E5.c_M33_H,
            vol_Y1=E5.vol_Y1,
        )

    def packed(self, key):
        value = getattr(self, key)
        return value.reshape(4, 4) if value.ndim == 4 else value.reshape(4)

    def to_dict(self):
        """Plain nested lists in the fixed key order."""
        return {key: as_plain(getattr(self, key)) for key in self.KEYS}

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: data[key] for key in cls.KEYS})

    def scaled(self, factor):
        values = {key: factor * getattr(self, key) for key in self.KEYS[:-1]}
        return EffectiveTensorsComparable(vol_Y1=self.vol_Y1, **values)


def effective_tensors_comparable(solutions, field, mesh):
    """Averages the generalized strains of the correctors against R10.

    With G^M_a = E^a + M1(U_M^a), G^N_a = -x3 E^a + M1(U_N^a) and
    G^3 = b + M1(U^3), each block is int G^X_a R10 G^Y_b over Z.

    Args:
        solutions (dict): CellSolution3D keyed by loading tag (all seven).
        field (np.ndarray): Per-element global tensors (ne, 10, 10).
        mesh (PeriodicMesh3D): Cell mesh.

    Returns:
        EffectiveTensorsComparable: The thirteen effective quantities.
    """
    missing = set(LOADING_TAGS) - set(solutions)
    if missing:
        raise ConfigurationError(f"missing correctors {sorted(missing)}")
    space = solutions["E3"].space
    order = space.element.quadrature_order
    points, weights = femcore.quadrature_points(mesh, order)
    x3 = points[..., 2][..., None]

    strains = []
    for prefix in ("M", "N"):
        for label in PACKED_LABELS:
            tag = prefix + ("12" if label == "21" else label)
            m1 = femcore.evaluate(space, solutions[tag].raw, "m1")
            base = macroscopic_loading(label)
            strains.append(m1 + (base if prefix == "M" else -x3 * base))
    electric = femcore.evaluate(space, solutions["E3"].raw, "m1")
    strains.append(electric_loading() + electric)
    strains = np.stack(strains)

    energy = np.einsum(
        "aeqi,eij,beqj,q->ab",
        strains,
        np.asarray(field),
        strains,
        weights,
        optimize=True,
    )
    M, N, E = slice(0, 4), slice(4, 8), 8
    return EffectiveTensorsComparable(
        R_MM_H=energy[M, M],
        R_MN_H=energy[M, N],
        R_NM_H=energy[N, M],
        R_NN_H=energy[N, N],
        d_MM3_H=energy[M, E],
        d_NM3_H=energy[N, E],
        e_MM3_H=energy[E, M],
        e_MN3_H=energy[E, N],
        c_MM33_H=energy[E, E],
        vol_Y1=mesh.vol_Y1,
    )


def homogenize_comparable(mesh, matrix, inclusion):
    """Solves every 3D corrector and averages.

    Returns:
        tuple: (EffectiveTensorsComparable, dict of CellSolution3D).
    """
    field = global_tensor_field(mesh, matrix, inclusion)
    solutions = solve_correctors_3d(field, mesh)
    return effective_tensors_comparable(solutions, field, mesh), solutions
