"""Effective Kirchhoff-Love plate solvers for both asymptotic regimes.

Membrane displacements use Q1 elements, deflections BFS elements, both
vanishing with all their DOFs on the clamped edges. The voltage unknown of
the nonlocal circuit model is Q1 (natural boundary conditions); without the
inter-inclusion admittance it is a value per quadrature point, which makes
its elimination exact and reproduces the local model.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import femcore
from .common import BoundaryConditionError, ConfigurationError, DegenerateCircuitError
from .loads import reduce_loads
from .material import circuit_denominator, local_reduction

logger = logging.getLogger(__name__)

PLATE_ORDER = 4
FLEXION_PIEZO_CHOICES = ("d_MM", "d_NM")


def _form(test, trial):
    return femcore.BilinearForm(test, trial)


@dataclass(eq=False)
class KLSpace:
    """Discrete Kirchhoff-Love space on a plate mesh."""

    mesh: femcore.PlateMesh
    membrane: femcore.FESpace
    deflection: femcore.FESpace
    voltage: femcore.FESpace = None

    @classmethod
    def build(cls, mesh, voltage=None):
        """Builds the clamped membrane and deflection spaces.

        Args:
            mesh (PlateMesh): Plate mesh.
            voltage (str, optional): None, "h1" (Q1) or "pointwise".

        Raises:
            BoundaryConditionError: If no edge is clamped.
        """
        if not mesh.clamped_edges:
            raise BoundaryConditionError(
                "the plate needs at least one clamped edge; the system is singular"
            )
        clamped = mesh.clamped_nodes
        return cls(
            mesh=mesh,
            membrane=femcore.q1_space(mesh, ncomp=2, fixed_nodes=clamped),
            deflection=femcore.bfs_space(mesh, fixed_nodes=clamped),
            voltage=voltage_space(mesh, voltage),
        )

    def with_voltage(self, kind):
        voltage = voltage_space(self.mesh, kind)
        return KLSpace(self.mesh, self.membrane, self.deflection, voltage)


def voltage_space(mesh, kind):
    if kind is None:
        return None
    if kind == "h1":
        return femcore.q1_space(mesh)
    if kind == "pointwise":
        return femcore.pointwise_space(mesh, PLATE_ORDER)
    raise ConfigurationError(f"unknown voltage space {kind!r}")


@dataclass(eq=False)
class PlateSolution:
    """Solution of one effective plate model.

    Attributes:
        model (str): Name of the solved model.
        space (KLSpace): Mechanical spaces.
        membrane (np.ndarray): Raw membrane DOFs (u1, u2 per node).
        deflection (np.ndarray): Raw BFS DOFs (w, d1 w, d2 w, d12 w per node).
        voltage (np.ndarray): Raw DOFs of the voltage in `voltage_space`.
        voltage_space (FESpace): Q1 (nodal) or pointwise space of the voltage.
        residual (float): Relative residual of the solve(s).
        energy (float): a(U, U).
        work (float): l(U).
    """

    model: str
    space: KLSpace
    membrane: np.ndarray
    deflection: np.ndarray
    voltage: np.ndarray
    voltage_space: femcore.FESpace
    residual: float
    energy: float
    work: float

    @property
    def max_deflection(self):
        return float(np.max(np.abs(self.deflection[0::4]), initial=0.0))

    def voltage_values(self):
        """Voltage at the plate quadrature points, (ne, nq)."""
        values = femcore.evaluate(
            self.voltage_space, self.voltage, "value", PLATE_ORDER
        )
        return values[..., 0]

    def membrane_strain(self):
        """Packed membrane strain s(u) at the plate quadrature points."""
        return femcore.evaluate(
            self.space.membrane, self.membrane, "sym_grad", PLATE_ORDER
        )

    @property
    def mean_voltage(self):
        area = float(np.prod(self.space.mesh.lengths))
        total = femcore.integrate(self.space.mesh, self.voltage_values(), PLATE_ORDER)
        return float(total) / area

    def summary(self):
        return {
            "model": self.model,
            "max_deflection": self.max_deflection,
            "elastic_energy": 0.5 * self.energy,
            "mean_voltage": self.mean_voltage,
            "residual": self.residual,
        }

    def nodal_table(self):
        """Nodal values as a DataFrame (voltage only when it is nodal)."""
        coords = self.space.mesh.node_coordinates
        table = pd.DataFrame(
            {
                "x1": coords[:, 0],
                "x2": coords[:, 1],
                "u1": self.membrane[0::2],
                "u2": self.membrane[1::2],
                "w": self.deflection[0::4],
                "dw_dx1": self.deflection[1::4],
                "dw_dx2": self.deflection[2::4],
                "d2w_dx1dx2": self.deflection[3::4],
            }
        )
        if self.voltage_space.kind == "Q1-scalar":
            table["L3"] = self.voltage
        return table

    def element_table(self):
        """Element centroids with the element mean of the voltage."""
        mesh = self.space.mesh
        _, weights = femcore.quadrature_points(mesh, PLATE_ORDER)
        means = self.voltage_values() @ weights / np.prod(mesh.spacing)
        centroids = mesh.element_centroids
        return pd.DataFrame(
            {"x1": centroids[:, 0], "x2": centroids[:, 1], "L3_mean": means}
        )


def _points(mesh):
    points, _ = femcore.quadrature_points(mesh, PLATE_ORDER)
    return points


def mechanical_loads(space, reduced):
    """Raw membrane and deflection load vectors of the reduced loads."""
    mesh = space.mesh
    points = _points(mesh)

    def stacked(polynomials, where):
        return np.stack([p.at(where) for p in polynomials], axis=-1)

    load_m = femcore.assemble_vector(
        "value", space.membrane, stacked(reduced.F, points), order=PLATE_ORDER
    )
    load_f = femcore.assemble_vector(
        "value", space.deflection, reduced.F3.at(points)[..., None], order=PLATE_ORDER
    ) + femcore.assemble_vector(
        "grad", space.deflection, stacked(reduced.M, points), order=PLATE_ORDER
    )
    for edge, load in reduced.edges.items():
        load_m = load_m + femcore.assemble_edge_vector(
            "value", space.membrane, edge, lambda p, load=load: stacked(load.N, p)
        )
        load_f = load_f + femcore.assemble_edge_vector(
            "value",
            space.deflection,
            edge,
            lambda p, load=load: load.n3.at(p)[..., None],
        )
        load_f = load_f + femcore.assemble_edge_vector(
            "grad", space.deflection, edge, lambda p, load=load: stacked(load.m, p)
        )
    return load_m, load_f


def _stiffness(space, test, trial, coeff, trial_space=None):
    operators = {"membrane": "sym_grad", "deflection": "hessian"}
    return femcore.assemble_matrix(
        _form(operators[test], operators[trial]),
        getattr(space, test),
        coeff,
        trial_space=None if trial_space is None else getattr(space, trial_space),
        order=PLATE_ORDER,
    )


def _bending(space, E5):
    return _stiffness(
        space, "deflection", "deflection", (2.0 / 3.0) * E5.packed("R_N_H")
    )


def _solve_single(matrix, load, fe_space, symmetry="spd"):
    system = femcore.SparseSystem.from_raw(matrix, load, fe_space)
    u, residual = femcore.solve(system, symmetry=symmetry, return_residual=True)
    energy = float(u @ (system.matrix @ u))
    return fe_space.expand(u), residual, energy, float(u @ system.rhs)


def _solve_blocks(blocks, loads, spaces):
    system = femcore.SparseSystem.from_blocks(blocks, loads, spaces)
    u, residual = femcore.solve(system, symmetry="general", return_residual=True)
    parts, start = [], 0
    for fe_space in spaces:
        parts.append(fe_space.expand(u[start:start + fe_space.n_free]))
        start += fe_space.n_free
    return parts, residual, float(u @ (system.matrix @ u)), float(u @ system.rhs)


def _decoupled(model, space, K_m, load_m, K_f, load_f, voltage, v_space):
    with ThreadPoolExecutor(max_workers=2) as executor:
        membrane = executor.submit(_solve_single, K_m, load_m, space.membrane)
        flexion = executor.submit(_solve_single, K_f, load_f, space.deflection)
        u_m, res_m, a_m, l_m = membrane.result()
        u_f, res_f, a_f, l_f = flexion.result()
    logger.info(
        "%s: membrane residual %.2e, flexion residual %.2e", model, res_m, res_f
    )
    return PlateSolution(
        model=model,
        space=space,
        membrane=u_m,
        deflection=u_f,
        voltage=voltage,
        voltage_space=v_space,
        residual=max(res_m, res_f),
        energy=a_m + a_f,
        work=l_m + l_f,
    )


def solve_dirichlet_thin(E5, loads, space):
    """Thin regime with prescribed voltage phi_c.

    Solves int 2 s(v) R_M^H s(u) + (2/3) d2 v3 R_N^H d2 u3 = l_u(v)
    - 2 int s(v) d^H phi_c; membrane and flexion decouple.

    Args:
        E5 (EffectiveTensorsThin): Effective tensors.
        loads (Loads): Loads with h = 0 and G = G1 = 0.
        space (KLSpace): Mechanical spaces.

    Returns:
        PlateSolution: With the voltage equal to phi_c at the nodes.
    """
    mesh = space.mesh
    load_m, load_f = mechanical_loads(space, reduce_loads(loads, mesh))
    phi = loads.phi_c.at(_points(mesh))
    load_m = load_m - femcore.assemble_vector(
        "sym_grad",
        space.membrane,
        2.0 * phi[..., None] * E5.packed("d_M3_H"),
        order=PLATE_ORDER,
    )
    K_m = _stiffness(space, "membrane", "membrane", 2.0 * E5.packed("R_M_H"))
    K_f = _bending(space, E5)
    v_space = voltage_space(mesh, "h1")
    voltage = loads.phi_c.at(mesh.node_coordinates)
    return _decoupled(
        "dirichlet_thin", space, K_m, load_m, K_f, load_f, voltage, v_space
    )


def recover_voltage_local(E5, G, strain, h):
    """Voltage of the local circuit model, (c^H + 2|Y1|G) L = |Y1| h - e^H : s(u).

    Args:
        E5 (EffectiveTensorsThin): Effective tensors.
        G (float): Admittance.
        strain (array_like): Packed membrane strain (..., 4).
        h (array_like): Current source at the same points (...).

    Returns:
        np.ndarray: Voltage at the given points.
    """
    denominator = circuit_denominator(E5.c_M33_H, G, E5.vol_Y1)
    strain = np.asarray(strain, dtype=float)
    source = E5.vol_Y1 * np.asarray(h, dtype=float)
    return (source - strain @ E5.packed("e_M3_H")) / denominator


def equivalent_voltage(E5, G, h):
    """Imposed voltage equivalent to a local circuit when e^H = 0."""
    return E5.vol_Y1 * np.asarray(h, dtype=float) / circuit_denominator(
        E5.c_M33_H, G, E5.vol_Y1
    )


def solve_local_mixed_thin(E5, G, loads, space):
    """Thin regime with a local circuit of admittance G on each inclusion.

    The voltage is eliminated pointwise: the membrane problem uses
    R^{H,loc} and the source -2 int s(v) d^H |Y1| h / (c^H + 2|Y1|G); the
    voltage is recovered afterwards at the quadrature points. G = 0 gives
    Neumann electric conditions.
    """
    mesh = space.mesh
    denominator = circuit_denominator(E5.c_M33_H, G, E5.vol_Y1)
    load_m, load_f = mechanical_loads(space, reduce_loads(loads, mesh))
    h = loads.h.at(_points(mesh))
    source = 2.0 * E5.vol_Y1 * h / denominator
    load_m = load_m - femcore.assemble_vector(
        "sym_grad",
        space.membrane,
        source[..., None] * E5.packed("d_M3_H"),
        order=PLATE_ORDER,
    )
    R_loc = local_reduction(E5, G).reshape(4, 4)
    K_m = _stiffness(space, "membrane", "membrane", 2.0 * R_loc)
    K_f = _bending(space, E5)
    v_space = voltage_space(mesh, "pointwise")
    solution = _decoupled(
        "local_mixed_thin", space, K_m, load_m, K_f, load_f, None, v_space
    )
    strain = solution.membrane_strain()
    solution.voltage = recover_voltage_local(E5, G, strain, h).ravel()
    return solution


def _voltage_blocks(v_space, reaction, diffusion):
    K = femcore.assemble_matrix(
        _form("value", "value"), v_space, reaction, order=PLATE_ORDER
    )
    if diffusion > 0:
        K = K + femcore.assemble_matrix(
            _form("grad", "grad"), v_space, diffusion, order=PLATE_ORDER
        )
    return K


def _coupling(test_space, test_op, trial_space, trial_op, coeff):
    return femcore.assemble_matrix(
        _form(test_op, trial_op),
        test_space,
        coeff,
        trial_space=trial_space,
        order=PLATE_ORDER,
    )


def solve_nonlocal_mixed_thin(E5, G, G1, loads, space, voltage=None):
    """Thin regime with circuits linking neighbouring inclusions.

    The membrane displacement and the voltage solve the coupled system
    2 (s, L~) [[R_M^H, d^H], [e^H, c^H + 2|Y1|G]] (s, L)
    + 4|Y1|G1 grad L~ . grad L = l_u(v) + 2|Y1| int L~ h;
    the flexion problem is decoupled.

    Args:
        E5 (EffectiveTensorsThin): Effective tensors.
        G (float): Admittance of the local circuits.
        G1 (float): Admittance between neighbouring inclusions.
        loads (Loads): Loads with phi_c = 0.
        space (KLSpace): Mechanical spaces.
        voltage (str, optional): "h1" or "pointwise"; by default Q1 when
            G1 > 0 and pointwise otherwise.

    Returns:
        PlateSolution: The solution.
    """
    if G < 0 or G1 < 0:
        raise ConfigurationError("circuit constants G and G1 must be nonnegative")
    if voltage is None:
        voltage = "h1" if G1 > 0 else "pointwise"
    if voltage == "pointwise" and G1 > 0:
        raise ConfigurationError("a pointwise voltage cannot carry the G1 term")
    mesh = space.mesh
    vol = E5.vol_Y1
    denominator = circuit_denominator(E5.c_M33_H, G, vol)
    v_space = voltage_space(mesh, voltage)
    load_m, load_f = mechanical_loads(space, reduce_loads(loads, mesh))
    h = loads.h.at(_points(mesh))
    load_L = femcore.assemble_vector(
        "value", v_space, 2.0 * vol * h[..., None], order=PLATE_ORDER
    )
    d4, e4 = E5.packed("d_M3_H"), E5.packed("e_M3_H")
    blocks = [
        [
            _stiffness(space, "membrane", "membrane", 2.0 * E5.packed("R_M_H")),
            _coupling(space.membrane, "sym_grad", v_space, "value", 2.0 * d4[:, None]),
        ],
        [
            _coupling(v_space, "value", space.membrane, "sym_grad", 2.0 * e4[None, :]),
            _voltage_blocks(v_space, 2.0 * denominator, 4.0 * vol * G1),
        ],
    ]
    (u_m, voltage_dofs), res_c, a_c, l_c = _solve_blocks(
        blocks, [load_m, load_L], [space.membrane, v_space]
    )
    K_f = _bending(space, E5)
    u_f, res_f, a_f, l_f = _solve_single(K_f, load_f, space.deflection)
    logger.info(
        "nonlocal_mixed_thin: coupled residual %.2e, flexion %.2e", res_c, res_f
    )
    return PlateSolution(
        model="nonlocal_mixed_thin",
        space=space,
        membrane=u_m,
        deflection=u_f,
        voltage=voltage_dofs,
        voltage_space=v_space,
        residual=max(res_c, res_f),
        energy=a_c + a_f,
        work=l_c + l_f,
    )


def solve_dirichlet_comparable(E6, loads, space, flexion_piezo="d_MM"):
    """Comparable regime with prescribed voltage; membrane and flexion coupled.

    The right side is l_u(v) - int (s(v), d2 v3) . d phi_c where the
    membrane row carries d_MM and the flexion row carries d_MM, or d_NM when
    `flexion_piezo` is "d_NM".
    """
    if flexion_piezo not in FLEXION_PIEZO_CHOICES:
        raise ConfigurationError(
            f"flexion_piezo must be one of {FLEXION_PIEZO_CHOICES}"
        )
    if flexion_piezo == "d_NM":
        logger.warning(
            "Using d_NM instead of d_MM in the flexion row of the voltage load"
        )
    mesh = space.mesh
    load_m, load_f = mechanical_loads(space, reduce_loads(loads, mesh))
    phi = loads.phi_c.at(_points(mesh))[..., None]
    d_flexion = E6.packed("d_MM3_H" if flexion_piezo == "d_MM" else "d_NM3_H")
    load_m = load_m - femcore.assemble_vector(
        "sym_grad", space.membrane, phi * E6.packed("d_MM3_H"), order=PLATE_ORDER
    )
    load_f = load_f - femcore.assemble_vector(
        "hessian", space.deflection, phi * d_flexion, order=PLATE_ORDER
    )
    blocks = [
        [
            _stiffness(space, "membrane", "membrane", E6.packed("R_MM_H")),
            _stiffness(
                space, "membrane", "deflection", E6.packed("R_MN_H"), "deflection"
            ),
        ],
        [
            _stiffness(
                space, "deflection", "membrane", E6.packed("R_NM_H"), "membrane"
            ),
            _stiffness(space, "deflection", "deflection", E6.packed("R_NN_H")),
        ],
    ]
    (u_m, u_f), residual, energy, work = _solve_blocks(
        blocks, [load_m, load_f], [space.membrane, space.deflection]
    )
    logger.info("dirichlet_comparable: residual %.2e", residual)
    v_space = voltage_space(mesh, "h1")
    return PlateSolution(
        model="dirichlet_comparable",
        space=space,
        membrane=u_m,
        deflection=u_f,
        voltage=loads.phi_c.at(mesh.node_coordinates),
        voltage_space=v_space,
        residual=residual,
        energy=energy,
        work=work,
    )


def solve_mixed_comparable(E6, G, G1, loads, space):
    """Comparable regime with circuits; unknowns (u, L, u3) fully coupled.

    Blocks are [[R_MM, d_MM, R_MN], [e_MM, c_MM33 + 4|Y1|G (+ 4|Y1|G1 grad.grad),
    e_MN], [R_NM, d_NM, R_NN]] with the source 2|Y1| int L~ h. The voltage is
    pointwise when G1 = 0 and Q1 otherwise.
    """
    if G < 0 or G1 < 0:
        raise ConfigurationError("circuit constants G and G1 must be nonnegative")
    mesh = space.mesh
    vol = E6.vol_Y1
    reaction = E6.c_MM33_H + 4.0 * vol * G
    if not reaction > 0.0:
        raise DegenerateCircuitError(
            f"c_MM33 + 4|Y1|G = {reaction:.6g} must be positive"
        )
    v_space = voltage_space(mesh, "h1" if G1 > 0 else "pointwise")
    load_m, load_f = mechanical_loads(space, reduce_loads(loads, mesh))
    h = loads.h.at(_points(mesh))
    load_L = femcore.assemble_vector(
        "value", v_space, 2.0 * vol * h[..., None], order=PLATE_ORDER
    )
    m, f = space.membrane, space.deflection
    blocks = [
        [
            _stiffness(space, "membrane", "membrane", E6.packed("R_MM_H")),
            _coupling(m, "sym_grad", v_space, "value", E6.packed("d_MM3_H")[:, None]),
            _stiffness(
                space, "membrane", "deflection", E6.packed("R_MN_H"), "deflection"
            ),
        ],
        [
            _coupling(v_space, "value", m, "sym_grad", E6.packed("e_MM3_H")[None, :]),
            _voltage_blocks(v_space, reaction, 4.0 * vol * G1),
            _coupling(v_space, "value", f, "hessian", E6.packed("e_MN3_H")[None, :]),
        ],
        [
            _stiffness(
                space, "deflection", "membrane", E6.packed("R_NM_H"), "membrane"
            ),
            _coupling(f, "hessian", v_space, "value", E6.packed("d_NM3_H")[:, None]),
            _stiffness(space, "deflection", "deflection", E6.packed("R_NN_H")),
        ],
    ]
    (u_m, voltage, u_f), residual, energy, work = _solve_blocks(
        blocks, [load_m, load_L, load_f], [m, v_space, f]
    )
    logger.info("mixed_comparable: residual %.2e", residual)
    return PlateSolution(
        model="mixed_comparable",
        space=space,
        membrane=u_m,
        deflection=u_f,
        voltage=voltage,
        voltage_space=v_space,
        residual=residual,
        energy=energy,
        work=work,
    )
