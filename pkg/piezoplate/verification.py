"""Property and oracle checks run by `piezoplate verify`.

Every check works at desk scale and returns a CheckResult; none of them
raises on a failed property.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .cell2d import EffectiveTensorsThin, homogenize_thin
from .cell3d import homogenize_comparable
from .common import inplane_mandel
from .femcore import (
    InclusionShape,
    PeriodicMesh2D,
    PeriodicMesh3D,
    PlateMesh,
    build_cell_mesh_2d,
)
from .loads import Loads
from .material import (
    ElasticTensor,
    PermittivityTensor,
    PiezoTensor,
    assemble_global_tensor,
    condense,
    pack_m_vector,
)
from .pipeline import richardson_rate
from .plate import (
    KLSpace,
    recover_voltage_local,
    solve_dirichlet_thin,
    solve_local_mixed_thin,
    solve_nonlocal_mixed_thin,
)

logger = logging.getLogger(__name__)

# Centre deflection of a uniformly loaded clamped square plate, in units of q L^4 / D.
CLAMPED_CENTRE_COEFFICIENT = 0.00126532

SAMPLE_PIEZO = (
    (0.0, 0.0, 0.0, 0.0, 0.3, 0.0),
    (0.0, 0.0, 0.0, 0.3, 0.0, 0.0),
    (-0.2, -0.2, 0.4, 0.0, 0.0, 0.0),
)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one property check.

    Attributes:
        name (str): Check name.
        passed (bool): Whether the property holds.
        value (float): Measured deviation (or rate).
        tolerance (float): Threshold it was held to.
        detail (str): Human-readable description.
        seconds (float): Runtime.
    """

    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0


def _isotropic(lam=1.0, mu=1.0, electric=True, piezo=False):
    return assemble_global_tensor(
        ElasticTensor.isotropic(lam, mu),
        PiezoTensor.from_voigt(SAMPLE_PIEZO) if piezo else PiezoTensor(),
        PermittivityTensor(np.eye(3)) if electric else PermittivityTensor(),
    )


def _relative(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(1.0, np.max(np.abs(b), initial=0.0))
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def check_condensation():
    """Isotropic lambda = mu = 1, d = 0, c = I condenses to (8/3, 2/3, 1), c_M33 = 1."""
    ct = condense(_isotropic())
    expected = np.array(
        [[8 / 3, 0, 0, 2 / 3], [0, 1, 1, 0], [0, 1, 1, 0], [2 / 3, 0, 0, 8 / 3]]
    )
    deviation = max(
        _relative(ct.membrane, expected),
        _relative(ct.flexion, expected),
        abs(ct.permittivity - 1.0),
    )
    detail = "plane-stress reduction of an isotropic phase"
    return "condensation", deviation, 1e-12, detail


def check_constant_coefficients(n=8):
    """Identical phases give zero correctors and the condensed tensors."""
    phase = _isotropic(2.0, 1.5, piezo=True)
    mesh = build_cell_mesh_2d(n, InclusionShape("disk", 0.25))
    tensors, correctors = homogenize_thin(mesh, phase, phase)
    oracle = EffectiveTensorsThin.from_condensed(condense(phase), mesh.vol_Y1)
    vectors = list(correctors.membrane.values()) + list(correctors.flexion.values())
    vectors.append(correctors.piezo)
    deviation = max(
        max(float(np.max(np.abs(v))) for v in vectors),
        max(_relative(getattr(tensors, k), getattr(oracle, k)) for k in oracle.KEYS),
    )
    detail = "zero correctors, condensed tensors"
    return "constant_coefficients", deviation, 1e-10, detail


def laminate_mesh(n):
    """Layers normal to y1: the inclusion fills |y1| < 1/4."""
    phase = np.zeros((n, n), dtype=bool)
    phase[n // 4: 3 * n // 4, :] = True
    return PeriodicMesh2D.from_phase_map(phase)


def check_laminate(n=16):
    """Shear laminate, mu in {1, 4}: effective shear is the harmonic mean 1.6."""
    mesh = laminate_mesh(n)
    matrix, inclusion = _isotropic(0.0, 1.0, electric=False), _isotropic(0.0, 4.0)
    tensors, _ = homogenize_thin(mesh, matrix, inclusion)
    shear = tensors.packed("R_M_H")[1, 1]
    deviation = abs(shear - 1.6)
    # arithmetic mean of the shear moduli
    if shear > 2.5 + 1e-8:
        deviation = np.inf
    return "laminate", deviation, 1e-6, f"R_M^H_1212 = {shear:.12f}"


def check_voigt_reuss(samples=20, n=8, seed=0):
    """Random two-phase maps: diagonal membrane entries between Reuss and Voigt."""
    rng = np.random.default_rng(seed)
    matrix, inclusion = _isotropic(1.0, 1.0, electric=False), _isotropic(2.0, 3.0)
    A = inplane_mandel(condense(matrix).membrane)
    B = inplane_mandel(condense(inclusion).membrane)
    worst = -np.inf
    for _ in range(samples):
        mesh = PeriodicMesh2D.from_phase_map(rng.random((n, n)) < 0.5)
        tensors, _ = homogenize_thin(mesh, matrix, inclusion, max_workers=1)
        H = np.diag(inplane_mandel(tensors.packed("R_M_H")))
        f = mesh.vol_Y1
        voigt = np.diag((1 - f) * A + f * B)
        compliance = (1 - f) * np.linalg.inv(A) + f * np.linalg.inv(B)
        reuss = np.diag(np.linalg.inv(compliance))
        worst = max(worst, float(np.max(H - voigt)), float(np.max(reuss - H)))
    return "voigt_reuss", max(worst, 0.0), 1e-8, f"{samples} random microstructures"


def check_regime_consistency(n=4, nz=8):
    """Constant coefficients: R_MM = 2 R_M, R_NN ~ (2/3) R_N, no coupling."""
    phase = _isotropic()
    inclusion = np.ones((n, n), dtype=bool)
    mesh = PeriodicMesh3D.from_phase_map(inclusion, nz)
    E6, _ = homogenize_comparable(mesh, phase, phase)
    ct = condense(phase)
    exact = max(
        _relative(E6.packed("R_MM_H"), 2.0 * ct.membrane),
        abs(E6.c_MM33_H - 2.0 * ct.permittivity),
        float(np.max(np.abs(E6.packed("R_MN_H")))),
        float(np.max(np.abs(E6.packed("R_NM_H")))),
        float(np.max(np.abs(E6.d_NM3_H))),
        float(np.max(np.abs(E6.e_MN3_H))),
    )
    bending = _relative(E6.packed("R_NN_H"), (2.0 / 3.0) * ct.flexion)
    passed_value = exact if bending <= 1e-2 else np.inf
    detail = f"bending blocks within {bending:.2e} (Q1 through the thickness)"
    return "regime_consistency", passed_value, 1e-8, detail


def clamped_centre_deflection(n, q=1.0):
    """Centre deflection of the Dirichlet thin model on the unit square."""
    E5 = EffectiveTensorsThin.from_condensed(condense(_isotropic()), 0.0)
    space = KLSpace.build(PlateMesh.rectangle(n, n))
    solution = solve_dirichlet_thin(E5, Loads(f=(0.0, 0.0, q)), space)
    centre = np.argmin(np.sum((space.mesh.node_coordinates - 0.5) ** 2, axis=1))
    bending = (2.0 / 3.0) * E5.packed("R_N_H")[0, 0]
    return float(solution.deflection[4 * centre]), bending


def check_clamped_plate(levels=(16, 32, 64)):
    """Uniform load on a clamped square against the series reference."""
    values = []
    for n in levels:
        w, D = clamped_centre_deflection(n)
        values.append(w)
    reference = CLAMPED_CENTRE_COEFFICIENT * 2.0 / D
    error = abs(values[-1] - reference) / reference
    rate, _ = richardson_rate(values, levels)
    passed_value = error if rate >= 1.8 else np.inf
    return "clamped_plate", passed_value, 1e-2, f"observed rate {rate:.2f}"


def _mixed_case(n=8):
    E5 = EffectiveTensorsThin.from_condensed(condense(_isotropic(piezo=True)), 0.3)
    space = KLSpace.build(PlateMesh.rectangle(n, n))
    loads = Loads(f=(0.1, 0.0, 1.0), h={"1": 1.0, "x1": 0.5})
    return E5, space, loads


def _gap(a, b):
    return max(
        _relative(a.membrane, b.membrane),
        _relative(a.deflection, b.deflection),
    )


def _distance(a, b):
    return max(_gap(a, b), _relative(a.voltage_values(), b.voltage_values()))


def local_nonlocal_distances(G=0.5, sequence=(1e-2, 1e-4, 1e-6, 1e-8)):
    """Distances from nonlocal solutions at each G1 to the local solution.

    The tensors are uncoupled and the current source is linear, so the
    local voltage lies in the Q1 voltage space and the distances go to
    zero with G1.
    """
    _, space, loads = _mixed_case()
    E5 = EffectiveTensorsThin.from_condensed(condense(_isotropic()), 0.3)
    local = solve_local_mixed_thin(E5, G, loads, space)
    return [
        _distance(solve_nonlocal_mixed_thin(E5, G, G1, loads, space), local)
        for G1 in sequence
    ]


def check_local_nonlocal(G=0.5, sequence=(1e-2, 1e-4, 1e-6, 1e-8)):
    """Local circuits equal the nonlocal model at G1 = 0; G1 -> 0+ converges."""
    E5, space, loads = _mixed_case()
    local = solve_local_mixed_thin(E5, G, loads, space)
    nonlocal_zero = solve_nonlocal_mixed_thin(E5, G, 0.0, loads, space)
    gap = _distance(local, nonlocal_zero)
    distances = local_nonlocal_distances(G, sequence)
    monotone = all(a > b for a, b in zip(distances, distances[1:]))
    converged = distances[-1] <= 1e3 * sequence[-1]
    return (
        "local_nonlocal",
        gap if monotone and converged else np.inf,
        1e-8,
        "distances to local " + ", ".join(f"{d:.1e}" for d in distances),
    )


def check_voltage_recovery(G=0.5, h=2.0):
    """Constant h without coupling gives L = |Y1| h / (c + 2|Y1| G) everywhere."""
    E5 = EffectiveTensorsThin.from_condensed(condense(_isotropic()), 0.3)
    space = KLSpace.build(PlateMesh.rectangle(4, 4))
    solution = solve_local_mixed_thin(E5, G, Loads(f=(0.0, 0.0, 1.0), h=h), space)
    expected = E5.vol_Y1 * h / (E5.c_M33_H + 2.0 * E5.vol_Y1 * G)
    strain = np.random.default_rng(1).normal(size=(5, 4))
    piezo = EffectiveTensorsThin.from_condensed(condense(_isotropic(piezo=True)), 0.3)
    formula = (piezo.vol_Y1 * h - strain @ piezo.packed("e_M3_H")) / (
        piezo.c_M33_H + 2.0 * piezo.vol_Y1 * G
    )
    deviation = max(
        float(np.max(np.abs(solution.voltage - expected))),
        float(np.max(np.abs(recover_voltage_local(piezo, G, strain, h) - formula))),
    )
    return "voltage_recovery", deviation, 1e-10, f"L = {expected:.6f}"


def check_energy_identity(samples=1000, seed=0):
    """M . R10 . M equals R s:s + c L.L for random fields."""
    rng = np.random.default_rng(seed)
    R = ElasticTensor.isotropic(1.3, 0.7)
    d = PiezoTensor.from_voigt(rng.normal(size=18))
    c = PermittivityTensor(np.eye(3) + 0.1 * np.ones((3, 3)))
    R10 = assemble_global_tensor(R, d, c).matrix
    worst = 0.0
    for _ in range(samples):
        s = rng.normal(size=(3, 3))
        s = 0.5 * (s + s.T)
        L = rng.normal(size=3)
        M = pack_m_vector(s, L)
        lhs = M @ R10 @ M
        rhs = np.einsum("ijkl,ij,kl->", R.R, s, s) + L @ c.c @ L
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return "energy_identity", worst, 1e-12, f"{samples} random samples"


def check_linearity_and_scaling(t=3.0):
    """Plate solutions are linear in the loads; tensors scale with R10."""
    E5 = EffectiveTensorsThin.from_condensed(condense(_isotropic(piezo=True)), 0.3)
    space = KLSpace.build(PlateMesh.rectangle(6, 6))
    first = Loads(f=(0.0, 0.0, {"1": 1.0, "x1*x2": 2.0}), phi_c=0.5)
    second = Loads(f=({"x3": 1.0}, 0.2, 0.0), g_top=(0.0, 0.0, -1.0))
    a = solve_dirichlet_thin(E5, first, space)
    b = solve_dirichlet_thin(E5, second, space)
    both = solve_dirichlet_thin(E5, first + second, space)
    linear = max(
        _relative(both.membrane, a.membrane + b.membrane),
        _relative(both.deflection, a.deflection + b.deflection),
    )
    mesh = build_cell_mesh_2d(8, InclusionShape("square", 0.5))
    matrix = _isotropic(1.0, 1.0, electric=False)
    inclusion = _isotropic(3.0, 2.0, piezo=True)
    base, base_correctors = homogenize_thin(mesh, matrix, inclusion, max_workers=1)
    scaled, scaled_correctors = homogenize_thin(
        mesh, matrix.scaled(t), inclusion.scaled(t), max_workers=1
    )
    covariance = max(
        max(
            _relative(getattr(scaled, k), t * getattr(base, k))
            for k in base.KEYS[:-1]
        ),
        _relative(scaled_correctors.membrane["12"], base_correctors.membrane["12"]),
        _relative(scaled_correctors.piezo, base_correctors.piezo),
    )
    return "linearity_scaling", max(linear, covariance), 1e-10, f"t = {t}"


CHECKS = (
    check_condensation,
    check_constant_coefficients,
    check_laminate,
    check_voigt_reuss,
    check_regime_consistency,
    check_clamped_plate,
    check_local_nonlocal,
    check_voltage_recovery,
    check_energy_identity,
    check_linearity_and_scaling,
)


def run_check(check):
    """Runs one check function, turning exceptions into failures."""
    start = time.perf_counter()
    try:
        name, value, tolerance, detail = check()
        passed = bool(np.isfinite(value) and value <= tolerance)
    except Exception as err:  # reported as a failed check
        logger.exception("Check %s raised", check.__name__)
        name, value, tolerance, detail = check.__name__[6:], np.inf, 0.0, str(err)
        passed = False
    result = CheckResult(
        name, passed, float(value), tolerance, detail, time.perf_counter() - start
    )
    verdict = "pass" if passed else "FAIL"
    logger.info("%s: %s (%.3e <= %.0e)", name, verdict, value, tolerance)
    return result


def run_verification(checks=CHECKS):
    """Runs the property suite.

    Returns:
        list: CheckResult per check, in order.
    """
    return [run_check(check) for check in checks]


def results_table(results):
    return pd.DataFrame([r.__dict__ for r in results]).set_index("name")
