"""Structured-mesh finite elements.

Periodic unit-cell meshes in 2D and 3D, rectangular plate meshes, Q1 and
Bogner-Fox-Schmit (bicubic Hermite) elements, tensor Gauss quadrature,
constraint handling through a prolongation matrix (periodic identification
and homogeneous Dirichlet conditions), mean-zero constraints through
Lagrange multipliers, vectorized sparse assembly and direct solves.

Raw degrees of freedom are numbered node by node; a space's prolongation P
maps free DOFs to raw DOFs (u_raw = P u_free), so that reduced systems are
P^t K P and P^t F.
"""

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from .common import MECHANICAL_PAIRS, ConfigurationError, GeometryError, SolverError

logger = logging.getLogger(__name__)

EDGES = ("left", "right", "bottom", "top")
SOLVE_TOLERANCE = 1e-10
PIVOT_TOLERANCE = 1e-14
SYMMETRY_TOLERANCE = 1e-10


def gauss_rule(order, dim):
    """Tensor Gauss-Legendre rule on the reference cube [-1, 1]^dim.

    Args:
        order (int): Points per direction.
        dim (int): Space dimension.

    Returns:
        tuple: points (nq, dim) with the first coordinate varying slowest,
        and weights (nq,).
    """
    x, w = np.polynomial.legendre.leggauss(order)
    points = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return points, weights


def _corner_offsets(dim):
    return np.array(list(itertools.product((0, 1), repeat=dim)))


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StructuredGrid:
    """Box [origin, origin + lengths] split into a regular grid of cells.

    Nodes and elements are numbered in C order of their grid indices.
    """

    cells: tuple
    origin: tuple
    lengths: tuple
    periodic: tuple

    @property
    def dim(self):
        return len(self.cells)

    @cached_property
    def spacing(self):
        return np.asarray(self.lengths, dtype=float) / np.asarray(self.cells)

    @property
    def node_shape(self):
        return tuple(c + 1 for c in self.cells)

    @property
    def n_nodes(self):
        return int(np.prod(self.node_shape))

    @property
    def n_elements(self):
        return int(np.prod(self.cells))

    @property
    def jacobian_determinant(self):
        return float(np.prod(self.spacing / 2.0))

    @cached_property
    def node_indices(self):
        return np.indices(self.node_shape).reshape(self.dim, -1).T

    @cached_property
    def element_indices(self):
        return np.indices(self.cells).reshape(self.dim, -1).T

    @cached_property
    def node_coordinates(self):
        return np.asarray(self.origin) + self.node_indices * self.spacing

    @cached_property
    def element_nodes(self):
        """(n_elements, 2**dim) node numbers in the local corner order."""
        corners = self.element_indices[:, None, :] + _corner_offsets(self.dim)[None]
        return np.ravel_multi_index(
            tuple(corners[..., d] for d in range(self.dim)), self.node_shape
        )

    @cached_property
    def element_origins(self):
        return np.asarray(self.origin) + self.element_indices * self.spacing

    @property
    def element_centroids(self):
        return self.element_origins + 0.5 * self.spacing

    @cached_property
    def node_representatives(self):
        """Periodic image of every node (itself along non-periodic axes)."""
        indices = self.node_indices.copy()
        for d, periodic in enumerate(self.periodic):
            if periodic:
                indices[:, d] %= self.cells[d]
        return np.ravel_multi_index(tuple(indices.T), self.node_shape)

    def quadrature_points(self, reference_points):
        """Maps reference points to physical points, shape (ne, nq, dim)."""
        reference_points = np.asarray(reference_points, dtype=float)
        return (
            self.element_origins[:, None, :]
            + 0.5 * (reference_points[None] + 1.0) * self.spacing
        )


@dataclass(frozen=True)
class InclusionShape:
    """Inclusion geometry in the unit cell.

    Args:
        kind (str): "disk" (size = radius), "square" (size = side length) or
            "laminate" (a band |y1 - c1| < size / 2 spanning the cell in y2).
        size (float): Characteristic size.
        center (tuple): Center (c1, c2).
    """

    kind: str
    size: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("disk", "square", "laminate"):
            raise GeometryError(f"unknown inclusion shape {self.kind!r}")
        if self.size < 0:
            raise GeometryError(f"inclusion size must be nonnegative, got {self.size}")

    def contains(self, points):
        """True for points strictly inside the shape."""
        points = np.asarray(points, dtype=float)
        offset = points[..., :2] - np.asarray(self.center, dtype=float)
        if self.kind == "disk":
            return np.sum(offset**2, axis=-1) < self.size**2
        if self.kind == "square":
            return np.max(np.abs(offset), axis=-1) < 0.5 * self.size
        return np.abs(offset[..., 0]) < 0.5 * self.size

    def check_inside_cell(self):
        """Raises GeometryError if the shape reaches the cell boundary."""
        if self.size == 0:
            return
        c1, c2 = (abs(float(c)) for c in self.center)
        half = self.size if self.kind == "disk" else 0.5 * self.size
        reach = c1 + half if self.kind == "laminate" else max(c1, c2) + half
        if reach >= 0.5:
            raise GeometryError(
                f"{self.kind} inclusion of size {self.size} touches the cell boundary"
            )


@dataclass(frozen=True, eq=False)
class PeriodicMesh2D(StructuredGrid):
    """n x n grid on Y = (-1/2, 1/2)^2 with per-element phase tags."""

    inclusion: np.ndarray = None

    @classmethod
    def from_phase_map(cls, phase):
        """Builds the mesh from an (n, n) boolean map indexed [i1, i2]."""
        phase = np.asarray(phase, dtype=bool)
        if phase.ndim != 2 or phase.shape[0] != phase.shape[1] or phase.shape[0] < 2:
            raise GeometryError(
                f"phase map must be square with n >= 2, got {phase.shape}"
            )
        n = phase.shape[0]
        return cls(
            cells=(n, n),
            origin=(-0.5, -0.5),
            lengths=(1.0, 1.0),
            periodic=(True, True),
            inclusion=phase.ravel().copy(),
        )

    @property
    def n(self):
        return self.cells[0]

    @property
    def phase_map(self):
        return self.inclusion.reshape(self.cells)

    @property
    def vol_Y1(self):
        return float(np.count_nonzero(self.inclusion)) / self.n_elements


@dataclass(frozen=True, eq=False)
class PeriodicMesh3D(StructuredGrid):
    """n x n x nz grid on Z = Y x (-1, 1), periodic in y only."""

    inclusion: np.ndarray = None

    @classmethod
    def from_phase_map(cls, phase, nz):
        """Extrudes an (n, n) boolean map over nz layers."""
        phase = np.asarray(phase, dtype=bool)
        if phase.ndim != 2 or phase.shape[0] != phase.shape[1] or phase.shape[0] < 2:
            raise GeometryError(
                f"phase map must be square with n >= 2, got {phase.shape}"
            )
        if nz < 1:
            raise GeometryError(f"nz must be at least 1, got {nz}")
        n = phase.shape[0]
        return cls(
            cells=(n, n, int(nz)),
            origin=(-0.5, -0.5, -1.0),
            lengths=(1.0, 1.0, 2.0),
            periodic=(True, True, False),
            inclusion=np.repeat(phase.ravel(), nz),
        )

    @property
    def n(self):
        return self.cells[0]

    @property
    def nz(self):
        return self.cells[2]

    @property
    def phase_map(self):
        return self.inclusion.reshape(self.cells)[:, :, 0]

    @property
    def vol_Y1(self):
        return float(np.count_nonzero(self.phase_map)) / self.n**2

    @cached_property
    def inclusion_nodes(self):
        return np.unique(self.element_nodes[self.inclusion])

    def gamma_nodes(self, top=True):
        """Nodes of the metallized face Y1 x {1} (top) or Y1 x {-1}."""
        layer = self.nz if top else 0
        nodes = self.inclusion_nodes
        return nodes[self.node_indices[nodes, 2] == layer]


@dataclass(frozen=True, eq=False)
class PlateMesh(StructuredGrid):
    """nx x ny grid on the rectangle (0, lx) x (0, ly) with clamped edges."""

    clamped_edges: tuple = ()

    @classmethod
    def rectangle(cls, nx, ny, lx=1.0, ly=1.0, clamped_edges=EDGES):
        if nx < 1 or ny < 1:
            raise GeometryError(f"plate mesh needs nx, ny >= 1, got {nx}, {ny}")
        if lx <= 0 or ly <= 0:
            raise GeometryError(f"plate sides must be positive, got {lx}, {ly}")
        unknown = set(clamped_edges) - set(EDGES)
        if unknown:
            raise GeometryError(f"unknown edges {sorted(unknown)}; use {EDGES}")
        return cls(
            cells=(int(nx), int(ny)),
            origin=(0.0, 0.0),
            lengths=(float(lx), float(ly)),
            periodic=(False, False),
            clamped_edges=tuple(e for e in EDGES if e in clamped_edges),
        )

    def edge_nodes(self, edge):
        axis, index = self._edge_axis(edge)
        return np.nonzero(self.node_indices[:, axis] == index * self.cells[axis])[0]

    def edge_elements(self, edge):
        axis, index = self._edge_axis(edge)
        target = index * (self.cells[axis] - 1)
        return np.nonzero(self.element_indices[:, axis] == target)[0]

    @staticmethod
    def _edge_axis(edge):
        if edge not in EDGES:
            raise GeometryError(f"unknown edge {edge!r}")
        return {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}[edge]

    @property
    def clamped_nodes(self):
        if not self.clamped_edges:
            return np.zeros(0, dtype=int)
        nodes = [self.edge_nodes(e) for e in self.clamped_edges]
        return np.unique(np.concatenate(nodes))


def _phase_map(n, inclusion):
    centers = -0.5 + (np.arange(n) + 0.5) / n
    y1, y2 = np.meshgrid(centers, centers, indexing="ij")
    return inclusion.contains(np.stack([y1, y2], axis=-1))


def build_cell_mesh_2d(n, inclusion):
    """Builds the periodic 2D cell mesh; elements are tagged by centroid.

    Args:
        n (int): Subdivisions per direction, n >= 4.
        inclusion (InclusionShape): Inclusion geometry.

    Returns:
        PeriodicMesh2D: The tagged mesh.

    Raises:
        GeometryError: If n < 4 or the inclusion touches the cell boundary.
    """
    if n < 4:
        raise GeometryError(f"cell mesh needs n >= 4, got {n}")
    inclusion.check_inside_cell()
    mesh = PeriodicMesh2D.from_phase_map(_phase_map(n, inclusion))
    logger.debug(
        "2D cell mesh n=%d with %d inclusion elements", n, mesh.inclusion.sum()
    )
    return mesh


def build_cell_mesh_3d(n, nz, inclusion):
    """Builds the 3D cell mesh on Z, extruding the 2D centroid tagging."""
    if n < 4:
        raise GeometryError(f"cell mesh needs n >= 4, got {n}")
    inclusion.check_inside_cell()
    return PeriodicMesh3D.from_phase_map(_phase_map(n, inclusion), nz)


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------


class Q1Element:
    """Multilinear element with ncomp components per node.

    Local DOFs are ordered node by node, components fastest.
    """

    quadrature_order = 2

    def __init__(self, dim, spacing, ncomp=1):
        self.dim = dim
        self.spacing = np.asarray(spacing, dtype=float)
        self.ncomp = ncomp
        self.offsets = _corner_offsets(dim)
        self.n_nodes = len(self.offsets)
        self.n_local = self.n_nodes * ncomp

    def shape_functions(self, points):
        """Values (nq, nn) and physical gradients (nq, nn, dim)."""
        points = np.atleast_2d(points)
        sign = 2.0 * self.offsets - 1.0
        factors = 0.5 * (1.0 + sign[None] * points[:, None, :])
        values = np.prod(factors, axis=2)
        gradients = np.empty(values.shape + (self.dim,))
        for d in range(self.dim):
            others = np.prod(np.delete(factors, d, axis=2), axis=2)
            gradients[..., d] = sign[None, :, d] / self.spacing[d] * others
        return values, gradients

    def operator(self, name, points):
        values, gradients = self.shape_functions(points)
        nq, nn = values.shape
        k = self.ncomp
        if name == "value":
            B = np.zeros((nq, k, self.n_local))
            for c in range(k):
                B[:, c, c::k] = values
            return B
        if name == "grad" and k == 1:
            return gradients.transpose(0, 2, 1).copy()
        if name == "sym_grad" and k == self.dim:
            pairs = MECHANICAL_PAIRS[:4] if self.dim == 2 else MECHANICAL_PAIRS
            B = np.zeros((nq, len(pairs), self.n_local))
            for row, (i, j) in enumerate(pairs):
                B[:, row, i::k] += 0.5 * gradients[..., j]
                B[:, row, j::k] += 0.5 * gradients[..., i]
            return B
        raise ConfigurationError(
            f"operator {name!r} is not defined for a {k}-component Q1 element"
        )


class BFSElement:
    """Bogner-Fox-Schmit bicubic Hermite rectangle.

    Each node carries (w, d1 w, d2 w, d12 w); local DOFs are node-major.
    """

    quadrature_order = 4
    dim = 2
    kinds = ((0, 0), (1, 0), (0, 1), (1, 1))

    def __init__(self, spacing):
        self.spacing = np.asarray(spacing, dtype=float)
        self.offsets = _corner_offsets(2)
        self.n_local = 16

    @staticmethod
    def hermite(t, length):
        """1D Hermite cubics on one interval, indexed [q, node, kind].

        Returns values, first and second x-derivatives.
        """
        t = np.asarray(t, dtype=float)
        L = length
        H = np.empty(t.shape + (2, 2))
        dH = np.empty_like(H)
        ddH = np.empty_like(H)
        H[..., 0, 0] = 1.0 - 3.0 * t**2 + 2.0 * t**3
        H[..., 0, 1] = L * (t - 2.0 * t**2 + t**3)
        H[..., 1, 0] = 3.0 * t**2 - 2.0 * t**3
        H[..., 1, 1] = L * (t**3 - t**2)
        dH[..., 0, 0] = (-6.0 * t + 6.0 * t**2) / L
        dH[..., 0, 1] = 1.0 - 4.0 * t + 3.0 * t**2
        dH[..., 1, 0] = (6.0 * t - 6.0 * t**2) / L
        dH[..., 1, 1] = 3.0 * t**2 - 2.0 * t
        ddH[..., 0, 0] = (-6.0 + 12.0 * t) / L**2
        ddH[..., 0, 1] = (-4.0 + 6.0 * t) / L
        ddH[..., 1, 0] = (6.0 - 12.0 * t) / L**2
        ddH[..., 1, 1] = (6.0 * t - 2.0) / L
        return H, dH, ddH

    def operator(self, name, points):
        points = np.atleast_2d(points)
        t = 0.5 * (points + 1.0)
        hx = self.hermite(t[:, 0], self.spacing[0])
        hy = self.hermite(t[:, 1], self.spacing[1])
        nq = points.shape[0]

        def product(dx, dy):
            out = np.empty((nq, 16))
            for node, (a, b) in enumerate(self.offsets):
                for kind, (kx, ky) in enumerate(self.kinds):
                    out[:, 4 * node + kind] = hx[dx][:, a, kx] * hy[dy][:, b, ky]
            return out

        if name == "value":
            return product(0, 0)[:, None, :]
        if name == "grad":
            return np.stack([product(1, 0), product(0, 1)], axis=1)
        if name == "hessian":
            mixed = product(1, 1)
            return np.stack([product(2, 0), mixed, mixed, product(0, 2)], axis=1)
        raise ConfigurationError(f"operator {name!r} is not defined for BFS elements")


class PiezoQ1Element:
    """Hexahedron carrying a Q1 displacement (24 DOFs) and a Q1 potential (8 DOFs).

    The "m1" operator returns the packed 10-vector (S11, S12, S21, S22, S13,
    S23, S33, d1 psi, d2 psi, d3 psi).
    """

    quadrature_order = 2
    dim = 3

    def __init__(self, spacing):
        self.displacement = Q1Element(3, spacing, ncomp=3)
        self.potential = Q1Element(3, spacing, ncomp=1)
        self.n_local = self.displacement.n_local + self.potential.n_local

    def operator(self, name, points):
        nu = self.displacement.n_local
        if name == "m1":
            strain = self.displacement.operator("sym_grad", points)
            field_ = self.potential.operator("grad", points)
            B = np.zeros((strain.shape[0], 10, self.n_local))
            B[:, :7, :nu] = strain
            B[:, 7:, nu:] = field_
            return B
        if name == "value":
            B = np.zeros((np.atleast_2d(points).shape[0], 3, self.n_local))
            B[:, :, :nu] = self.displacement.operator("value", points)
            return B
        if name == "potential":
            B = np.zeros((np.atleast_2d(points).shape[0], 1, self.n_local))
            B[:, :, nu:] = self.potential.operator("value", points)
            return B
        raise ConfigurationError(f"operator {name!r} is not defined for piezo elements")


class PointwiseElement:
    """One independent value per quadrature point of a fixed Gauss rule."""

    def __init__(self, dim, order):
        self.dim = dim
        self.quadrature_order = order
        self.n_local = order**dim

    def operator(self, name, points):
        points = np.atleast_2d(points)
        if name != "value":
            raise ConfigurationError(f"operator {name!r} is not defined pointwise")
        if points.shape[0] != self.n_local:
            raise ConfigurationError(
                f"pointwise space lives on {self.n_local} points, got {points.shape[0]}"
            )
        return np.eye(self.n_local)[:, None, :]


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FESpace:
    """A finite element space with its constraint reduction.

    Attributes:
        kind (str): Q1-scalar, Q1-vector2, Q1-vector3, BFS-C1, Q1-piezo3 or
            pointwise.
        mesh (StructuredGrid): Underlying mesh.
        element: Element object providing `operator(name, points)`.
        cell_dofs (np.ndarray): Raw DOFs of each element, (ne, n_local).
        prolongation (scipy.sparse.csr_matrix): Raw-from-free map.
        constraints (scipy.sparse.csr_matrix): Mean-zero rows on free DOFs.
    """

    kind: str
    mesh: StructuredGrid
    element: object
    cell_dofs: np.ndarray
    prolongation: sp.csr_matrix
    constraints: object = None
    per_node: int = field(default=1)

    @property
    def n_raw(self):
        return self.prolongation.shape[0]

    @property
    def n_free(self):
        return self.prolongation.shape[1]

    def expand(self, free):
        """Raw DOF vector of a free DOF vector; identified DOFs get equal values."""
        return self.prolongation @ np.asarray(free)


def _node_dofs(mesh, per_node):
    nodes = mesh.element_nodes
    dofs = nodes[:, :, None] * per_node + np.arange(per_node)
    return dofs.reshape(nodes.shape[0], -1)


def _prolongation(representatives, fixed):
    n_raw = representatives.size
    free = ~(fixed | fixed[representatives])
    targets = representatives[free]
    unique = np.unique(targets)
    rows = np.nonzero(free)[0]
    cols = np.searchsorted(unique, targets)
    return sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n_raw, unique.size)
    )


def _dof_representatives(mesh, per_node):
    nodes = mesh.node_representatives
    return (nodes[:, None] * per_node + np.arange(per_node)).ravel()


def _fixed_mask(n_raw, per_node, nodes, kinds=None):
    fixed = np.zeros(n_raw, dtype=bool)
    nodes = np.asarray(nodes, dtype=int)
    for k in range(per_node) if kinds is None else kinds:
        fixed[nodes * per_node + k] = True
    return fixed


def _mean_zero_rows(space, operator, components):
    rows = []
    for c in range(components):
        coeff = np.zeros(components)
        coeff[c] = 1.0
        weights = assemble_vector(operator, space, coeff)
        rows.append(space.prolongation.T @ weights)
    return sp.csr_matrix(np.vstack(rows))


def q1_space(mesh, ncomp=1, fixed_nodes=(), mean_zero=False):
    """Q1 space with ncomp components per node.

    Args:
        mesh (StructuredGrid): Mesh; periodic axes are identified.
        ncomp (int): Components per node.
        fixed_nodes (array_like): Nodes where every component vanishes.
        mean_zero (bool): Add one mean-zero constraint per component.

    Returns:
        FESpace: The space.
    """
    element = Q1Element(mesh.dim, mesh.spacing, ncomp)
    n_raw = mesh.n_nodes * ncomp
    fixed = _fixed_mask(n_raw, ncomp, fixed_nodes)
    space = FESpace(
        kind="Q1-scalar" if ncomp == 1 else f"Q1-vector{ncomp}",
        mesh=mesh,
        element=element,
        cell_dofs=_node_dofs(mesh, ncomp),
        prolongation=_prolongation(_dof_representatives(mesh, ncomp), fixed),
        per_node=ncomp,
    )
    if mean_zero:
        space.constraints = _mean_zero_rows(space, "value", ncomp)
    return space


def bfs_space(mesh, fixed_nodes=(), mean_zero=False):
    """C1 bicubic Hermite space; fixed nodes have all four DOFs set to zero."""
    if mesh.dim != 2:
        raise ConfigurationError("BFS elements need a 2D mesh")
    n_raw = mesh.n_nodes * 4
    space = FESpace(
        kind="BFS-C1",
        mesh=mesh,
        element=BFSElement(mesh.spacing),
        cell_dofs=_node_dofs(mesh, 4),
        prolongation=_prolongation(
            _dof_representatives(mesh, 4), _fixed_mask(n_raw, 4, fixed_nodes)
        ),
        per_node=4,
    )
    if mean_zero:
        space.constraints = _mean_zero_rows(space, "value", 1)
    return space


def piezo_space(mesh):
    """Displacement and potential space on the 3D cell.

    Displacements are Q1 on Z with three mean-zero constraints. The potential
    lives on nodes of inclusion elements and vanishes on the faces Y1 x {-1, 1}.
    Raw layout: 3 displacement DOFs per node, then one potential DOF per node.
    """
    if not isinstance(mesh, PeriodicMesh3D):
        raise ConfigurationError("the piezo space needs a PeriodicMesh3D")
    n_nodes = mesh.n_nodes
    representatives = np.concatenate(
        [_dof_representatives(mesh, 3), 3 * n_nodes + mesh.node_representatives]
    )
    active = np.zeros(n_nodes, dtype=bool)
    active[mesh.inclusion_nodes] = True
    active[mesh.gamma_nodes(top=True)] = False
    active[mesh.gamma_nodes(top=False)] = False
    fixed = np.concatenate([np.zeros(3 * n_nodes, dtype=bool), ~active])
    cell_dofs = np.hstack([_node_dofs(mesh, 3), 3 * n_nodes + mesh.element_nodes])
    space = FESpace(
        kind="Q1-piezo3",
        mesh=mesh,
        element=PiezoQ1Element(mesh.spacing),
        cell_dofs=cell_dofs,
        prolongation=_prolongation(representatives, fixed),
        per_node=4,
    )
    space.constraints = _mean_zero_rows(space, "value", 3)
    return space


def pointwise_space(mesh, order=4):
    """Element-wise discontinuous space with one DOF per quadrature point."""
    element = PointwiseElement(mesh.dim, order)
    n_raw = mesh.n_elements * element.n_local
    return FESpace(
        kind="pointwise",
        mesh=mesh,
        element=element,
        cell_dofs=np.arange(n_raw).reshape(mesh.n_elements, element.n_local),
        prolongation=sp.identity(n_raw, format="csr"),
    )


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BilinearForm:
    """Integral of (test operator)^t C (trial operator), optionally weighted.

    Args:
        test (str): Operator applied to the test function.
        trial (str): Operator applied to the trial function.
        weight (callable, optional): Scalar weight of the physical quadrature
            points (ne, nq, dim) -> (ne, nq).
    """

    test: str
    trial: str
    weight: object = None


def _rule(mesh, order):
    points, weights = gauss_rule(order, mesh.dim)
    return points, weights * mesh.jacobian_determinant


def quadrature_points(mesh, order):
    """Physical quadrature points (ne, nq, dim) and weights (nq,)."""
    points, weights = _rule(mesh, order)
    return mesh.quadrature_points(points), weights


def _matrix_coefficient(coeff, ne, nq, a, b):
    coeff = np.asarray(coeff, dtype=float)
    if coeff.ndim == 0:
        coeff = coeff * np.eye(a, b)[None, None]
    elif coeff.ndim == 1:
        coeff = coeff[:, None, None, None] * np.eye(a, b)
    elif coeff.ndim == 2:
        coeff = coeff[None, None]
    elif coeff.ndim == 3:
        coeff = coeff[:, None]
    try:
        return np.broadcast_to(coeff, (ne, nq, a, b))
    except ValueError as err:
        raise ConfigurationError(
            f"coefficient of shape {np.shape(coeff)} "
            f"does not fit ({ne}, {nq}, {a}, {b})"
        ) from err


def _vector_coefficient(coeff, ne, nq, a):
    coeff = np.asarray(coeff, dtype=float)
    if coeff.ndim == 0:
        coeff = np.full((1, 1, a), float(coeff))
    elif coeff.ndim == 1:
        coeff = coeff[None, None]
    elif coeff.ndim == 2:
        coeff = coeff[:, None]
    try:
        return np.broadcast_to(coeff, (ne, nq, a))
    except ValueError as err:
        raise ConfigurationError(
            f"load coefficient of shape {np.shape(coeff)} "
            f"does not fit ({ne}, {nq}, {a})"
        ) from err


def element_matrices(form, space, coeff, trial_space=None, order=None):
    """Local matrices (ne, n_test_local, n_trial_local) of a bilinear form."""
    trial_space = space if trial_space is None else trial_space
    if trial_space.mesh is not space.mesh:
        raise ConfigurationError("test and trial spaces live on different meshes")
    mesh = space.mesh
    if order is None:
        order = max(
            space.element.quadrature_order, trial_space.element.quadrature_order
        )
    points, weights = _rule(mesh, order)
    B_test = space.element.operator(form.test, points)
    B_trial = trial_space.element.operator(form.trial, points)
    ne, nq = mesh.n_elements, points.shape[0]
    C = _matrix_coefficient(coeff, ne, nq, B_test.shape[1], B_trial.shape[1])
    W = np.broadcast_to(weights, (ne, nq))
    if form.weight is not None:
        W = W * form.weight(mesh.quadrature_points(points))
    return np.einsum("qai,eqab,qbj,eq->eij", B_test, C, B_trial, W, optimize=True)


def assemble_matrix(form, space, coeff, trial_space=None, order=None):
    """Assembles the raw (unreduced) sparse matrix of a bilinear form."""
    trial_space = space if trial_space is None else trial_space
    local = element_matrices(form, space, coeff, trial_space, order)
    rows = np.broadcast_to(space.cell_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(trial_space.cell_dofs[:, None, :], local.shape)
    return sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(space.n_raw, trial_space.n_raw),
    ).tocsr()


def assemble_vector(operator, space, coeff, weight=None, order=None):
    """Assembles the raw load vector of the integral of (operator v) . coeff.

    Args:
        operator (str): Operator applied to the test function.
        space (FESpace): Test space.
        coeff (array_like): Shape (a,), (ne, a) or (ne, nq, a).
        weight (callable, optional): Scalar weight of the physical points.
        order (int, optional): Gauss points per direction.

    Returns:
        np.ndarray: Raw vector of length space.n_raw.
    """
    mesh = space.mesh
    order = space.element.quadrature_order if order is None else order
    points, weights = _rule(mesh, order)
    B = space.element.operator(operator, points)
    ne, nq = mesh.n_elements, points.shape[0]
    C = _vector_coefficient(coeff, ne, nq, B.shape[1])
    W = np.broadcast_to(weights, (ne, nq))
    if weight is not None:
        W = W * weight(mesh.quadrature_points(points))
    local = np.einsum("qai,eqa,eq->ei", B, C, W, optimize=True)
    return np.bincount(
        space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_raw
    )


def assemble_edge_vector(operator, space, edge, coeff, order=4):
    """Load vector of a line integral along one edge of a PlateMesh.

    Args:
        operator (str): Operator applied to the test function.
        space (FESpace): Test space on a PlateMesh.
        edge (str): left, right, bottom or top.
        coeff (callable): Physical points (ne_edge, nq, 2) -> (ne_edge, nq, a).
        order (int): Gauss points along the edge.

    Returns:
        np.ndarray: Raw vector of length space.n_raw.
    """
    mesh = space.mesh
    axis, side = mesh._edge_axis(edge)
    tangent = 1 - axis
    x, w = np.polynomial.legendre.leggauss(order)
    points = np.empty((order, 2))
    points[:, axis] = 2.0 * side - 1.0
    points[:, tangent] = x
    weights = w * 0.5 * mesh.spacing[tangent]
    elements = mesh.edge_elements(edge)
    physical = (
        mesh.element_origins[elements][:, None, :]
        + 0.5 * (points[None] + 1.0) * mesh.spacing
    )
    B = space.element.operator(operator, points)
    C = _vector_coefficient(coeff(physical), elements.size, order, B.shape[1])
    local = np.einsum("qai,eqa,q->ei", B, C, weights)
    return np.bincount(
        space.cell_dofs[elements].ravel(), weights=local.ravel(), minlength=space.n_raw
    )


def evaluate(space, raw, operator, order=None):
    """Values of an operator applied to a raw DOF vector at quadrature points.

    Returns:
        np.ndarray: Shape (ne, nq, a).
    """
    order = space.element.quadrature_order if order is None else order
    points, _ = gauss_rule(order, space.mesh.dim)
    B = space.element.operator(operator, points)
    return np.einsum("qai,ei->eqa", B, np.asarray(raw)[space.cell_dofs])


def integrate(mesh, values, order):
    """Integral over the mesh of quadrature-point values (ne, nq, ...)."""
    _, weights = _rule(mesh, order)
    return np.einsum("eq...,q->...", values, weights)


def interpolate(space, function):
    """Nodal interpolation of a function of the node coordinates.

    `function` maps (n_nodes, dim) coordinates to (n_nodes, per_node) nodal
    DOFs: component values for Q1 spaces, (w, d1 w, d2 w, d12 w) for BFS.
    """
    values = np.asarray(function(space.mesh.node_coordinates), dtype=float)
    return values.reshape(space.mesh.n_nodes, space.per_node).ravel()


# ---------------------------------------------------------------------------
# Systems and solves
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SparseSystem:
    """A constraint-reduced linear system K u = F on free DOFs.

    Attributes:
        matrix (scipy.sparse.csr_matrix): Reduced matrix P^t K P.
        rhs (np.ndarray): Reduced right-hand side, (n,) or (n, k).
        prolongation (scipy.sparse.csr_matrix): Raw-from-free map.
        constraints (scipy.sparse.csr_matrix): Mean-zero rows, or None.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    prolongation: sp.csr_matrix
    constraints: object = None

    @classmethod
    def from_raw(cls, matrix, rhs, space):
        P = space.prolongation
        return cls(
            matrix=(P.T @ matrix @ P).tocsr(),
            rhs=P.T @ np.asarray(rhs, dtype=float),
            prolongation=P,
            constraints=space.constraints,
        )

    @classmethod
    def from_blocks(cls, blocks, rhs, spaces):
        """Builds a block system from raw blocks [i][j] (test i, trial j).

        Args:
            blocks (list): Nested list of raw sparse blocks or None.
            rhs (list): Raw right-hand sides, one per space.
            spaces (list): Spaces of the block rows and columns.
        """
        reduced = [
            [
                None if block is None else spaces[i].prolongation.T @ block
                @ spaces[j].prolongation
                for j, block in enumerate(row)
            ]
            for i, row in enumerate(blocks)
        ]
        sizes = [s.n_free for s in spaces]
        constraint_rows = []
        for i, space in enumerate(spaces):
            if space.constraints is None:
                continue
            m = space.constraints.shape[0]
            parts = [
                space.constraints if j == i else sp.csr_matrix((m, n))
                for j, n in enumerate(sizes)
            ]
            constraint_rows.append(sp.hstack(parts))
        return cls(
            matrix=sp.bmat(reduced, format="csr"),
            rhs=np.concatenate(
                [
                    s.prolongation.T @ np.asarray(r, dtype=float)
                    for s, r in zip(spaces, rhs)
                ]
            ),
            prolongation=sp.block_diag([s.prolongation for s in spaces], format="csr"),
            constraints=sp.vstack(constraint_rows).tocsr() if constraint_rows else None,
        )

    @property
    def n(self):
        return self.matrix.shape[0]

    def expand(self, u):
        return self.prolongation @ u

    def residual(self, u):
        """Relative residual |K u - F| / |F| of the unconstrained equations."""
        return _relative_residual(self.matrix @ u - self.rhs, self.rhs)


def assemble(form, space, coeff, load=None, order=None):
    """Assembles a bilinear form and a raw load into a reduced SparseSystem.

    Args:
        form (BilinearForm): Operators of the form.
        space (FESpace): Test and trial space.
        coeff (array_like): Coefficient, see `element_matrices`.
        load (np.ndarray, optional): Raw right-hand side(s), (n_raw,) or
            (n_raw, k); zero when omitted.
        order (int, optional): Gauss points per direction.

    Returns:
        SparseSystem: The constraint-reduced system.
    """
    matrix = assemble_matrix(form, space, coeff, order=order)
    if load is None:
        load = np.zeros(space.n_raw)
    if np.shape(load)[0] != space.n_raw:
        raise ConfigurationError(
            f"load has {np.shape(load)[0]} rows, space has {space.n_raw} DOFs"
        )
    return SparseSystem.from_raw(matrix, load, space)


def _relative_residual(residual, rhs):
    residual = np.asarray(residual).reshape(len(residual), -1)
    rhs = np.asarray(rhs).reshape(len(rhs), -1)
    worst = 0.0
    for r, b in zip(residual.T, rhs.T):
        norm_b = np.linalg.norm(b)
        norm_r = np.linalg.norm(r)
        if norm_b > 0.0:
            worst = max(worst, norm_r / norm_b)
        elif norm_r > 0.0:
            worst = np.inf
    return float(worst)


def solve(system, symmetry="spd", return_residual=False):
    """Solves a SparseSystem by sparse LU factorization.

    Mean-zero constraints are enforced exactly through Lagrange multipliers.

    Args:
        system (SparseSystem): The reduced system.
        symmetry (str): "spd" or "general".
        return_residual (bool): Also return the relative residual.

    Returns:
        np.ndarray: Free DOF vector(s), shaped like the right-hand side.

    Raises:
        ConfigurationError: Unknown symmetry, or "spd" on a nonsymmetric matrix.
        SolverError: Singular system or residual above tolerance.
    """
    if symmetry not in ("spd", "general"):
        raise ConfigurationError(
            f"symmetry must be 'spd' or 'general', got {symmetry!r}"
        )
    A = system.matrix
    rhs = np.asarray(system.rhs, dtype=float)
    n = A.shape[0]
    if n == 0:
        return (np.zeros_like(rhs), 0.0) if return_residual else np.zeros_like(rhs)
    if symmetry == "spd":
        tolerance = SYMMETRY_TOLERANCE * max(abs(A).max(), 1e-300)
        if abs(A - A.T).max() > tolerance:
            raise ConfigurationError("matrix is not symmetric; solve it as 'general'")
    C = system.constraints
    if C is not None and C.shape[0] > 0:
        m = C.shape[0]
        augmented = sp.bmat([[A, C.T], [C, None]], format="csc")
        b = np.concatenate([rhs, np.zeros((m,) + rhs.shape[1:])])
    else:
        augmented = A.tocsc()
        b = rhs
    permutation = "MMD_AT_PLUS_A" if symmetry == "spd" else "COLAMD"
    try:
        lu = spla.splu(augmented, permc_spec=permutation)
    except RuntimeError as err:
        raise SolverError(f"singular system: {err}") from err
    pivots = np.abs(lu.U.diagonal())
    if pivots.max() == 0.0 or pivots.min() < PIVOT_TOLERANCE * pivots.max():
        raise SolverError(
            "singular system: pivot ratio "
            f"{pivots.min() / max(pivots.max(), 1e-300):.3e}"
        )
    x = lu.solve(np.ascontiguousarray(b))
    residual = _relative_residual(augmented @ x - b, b)
    if residual > SOLVE_TOLERANCE:
        raise SolverError("solve did not reach the residual tolerance", residual)
    logger.debug("Solved %d DOFs (%s), relative residual %.2e", n, symmetry, residual)
    u = x[:n]
    return (u, residual) if return_residual else u
