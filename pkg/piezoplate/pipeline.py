"""End-to-end runs: validation, cell problems, effective tensors, plate solve.

Stages run in order and each failure is re-raised as a PipelineError naming
the stage. Cell solves fan out over threads inside their stage.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from . import serialization
from .cell2d import EffectiveTensorsThin, homogenize_thin
from .cell3d import EffectiveTensorsComparable, homogenize_comparable
from .common import ConfigurationError, MaterialValidationError, PipelineError
from .femcore import SOLVE_TOLERANCE, PlateMesh, build_cell_mesh_2d, build_cell_mesh_3d
from .plate import (
    KLSpace,
    solve_dirichlet_comparable,
    solve_dirichlet_thin,
    solve_local_mixed_thin,
    solve_mixed_comparable,
    solve_nonlocal_mixed_thin,
)

logger = logging.getLogger(__name__)

ENERGY_TOLERANCE = 1e-8
EXACT_TOLERANCE = 1e-9
TARGETS = ("cell", "plate")


@dataclass(eq=False)
class RunReport:
    """Machine-readable outcome of a run.

    Attributes:
        regime (str): Asymptotic regime.
        bc_type (str): Electric boundary conditions.
        timings (dict): Seconds per stage.
        residuals (dict): Relative residual per solve.
        effective (dict): Effective tensors as plain data.
        summary (dict): Plate solution summary.
        checks (dict): Named pass/fail checks.
        materials (dict): Elastic and electric margins per phase.
        artifacts (list): Files written.
    """

    regime: str
    bc_type: str
    timings: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    effective: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    materials: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self):
        within = all(r <= SOLVE_TOLERANCE for r in self.residuals.values())
        return within and all(self.checks.values())

    def to_dict(self):
        return {
            "regime": self.regime,
            "bc_type": self.bc_type,
            "passed": self.passed,
            "checks": self.checks,
            "materials": self.materials,
            "residuals": self.residuals,
            "summary": self.summary,
            "effective": self.effective,
            "timings": self.timings,
            "artifacts": [str(p) for p in self.artifacts],
        }


@contextmanager
def stage(name, timings=None):
    """Times a stage and wraps its failures in PipelineError."""
    logger.info("Stage %s started", name)
    start = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as err:
        logger.error("Stage %s failed: %s", name, err)
        raise PipelineError(name, err) from err
    elapsed = time.perf_counter() - start
    if timings is not None:
        timings[name] = elapsed
    logger.info("Stage %s finished in %.3f s", name, elapsed)


def validate_phases(config):
    """Validates both phases and returns their global tensors.

    Raises:
        MaterialValidationError: Listing every failed check.
    """
    failures = []
    for phase in (config.matrix, config.inclusion_material):
        report = phase.validate()
        failures.extend(f"{phase.name}: {message}" for message in report.failures())
    if failures:
        raise MaterialValidationError("; ".join(failures))
    return config.matrix.global_tensor(), config.inclusion_material.global_tensor()


def material_margins(config):
    """Smallest eigenvalues of R and c for each phase, keyed by phase name."""
    margins = {}
    for phase in (config.matrix, config.inclusion_material):
        report = phase.validate()
        margins[phase.name] = {
            "elastic_margin": report.elastic_margin,
            "electric_margin": report.electric_margin,
        }
    return margins


def homogenize(config, timings=None):
    """Runs the cell stage of the configured regime.

    Returns:
        tuple: (effective tensors, residuals dict, corrector norm).
    """
    timings = {} if timings is None else timings
    with stage("validate", timings):
        matrix, inclusion = validate_phases(config)
    with stage("mesh", timings):
        if config.regime == "thin":
            mesh = build_cell_mesh_2d(config.cell2d_n, config.inclusion)
        else:
            mesh = build_cell_mesh_3d(
                config.cell3d_n, config.cell3d_nz, config.inclusion
            )
    with stage("cell", timings):
        if config.regime == "thin":
            tensors, correctors = homogenize_thin(mesh, matrix, inclusion)
            residuals = {f"cell_{k}": v for k, v in correctors.residuals.items()}
            vectors = [*correctors.membrane.values(), *correctors.flexion.values()]
            vectors.append(correctors.piezo)
        else:
            tensors, solutions = homogenize_comparable(mesh, matrix, inclusion)
            residuals = {"cell_coupled": next(iter(solutions.values())).residual}
            vectors = [s.raw for s in solutions.values()]
    norm = max(float(np.max(np.abs(v), initial=0.0)) for v in vectors)
    logger.info("Effective tensors computed, largest corrector entry %.3e", norm)
    return tensors, residuals, norm


def solve_plate(config, tensors):
    """Solves the plate model selected by the regime and boundary conditions.

    Args:
        config (RunConfig): Configuration.
        tensors: EffectiveTensorsThin (thin) or EffectiveTensorsComparable.

    Returns:
        PlateSolution: The solution.
    """
    if config.regime == "thin":
        expected = EffectiveTensorsThin
    else:
        expected = EffectiveTensorsComparable
    if not isinstance(tensors, expected):
        raise ConfigurationError(
            f"{config.regime} regime needs {expected.__name__}, "
            f"got {type(tensors).__name__}"
        )
    plate = config.plate
    mesh = PlateMesh.rectangle(
        plate.nx, plate.ny, plate.lx, plate.ly, clamped_edges=plate.clamped_edges
    )
    space = KLSpace.build(mesh)
    circuit, loads = config.circuit, config.loads
    bc_type = circuit.bc_type
    if config.regime == "thin":
        if bc_type == "dirichlet":
            return solve_dirichlet_thin(tensors, loads, space)
        if bc_type == "nonlocal_mixed":
            return solve_nonlocal_mixed_thin(
                tensors, circuit.G, circuit.G1, loads, space
            )
        return solve_local_mixed_thin(tensors, circuit.G, loads, space)
    if bc_type == "dirichlet":
        return solve_dirichlet_comparable(tensors, loads, space, circuit.flexion_piezo)
    return solve_mixed_comparable(tensors, circuit.G, circuit.G1, loads, space)


def _energy_check(solution):
    scale = max(abs(solution.work), abs(solution.energy), 1e-300)
    return abs(solution.energy - solution.work) <= ENERGY_TOLERANCE * scale


def run_pipeline(config, output_dir=None):
    """Runs every stage and writes the artifacts.

    Writes effective_tensors.json, solution.json, solution_nodes.csv (and
    solution_elements.csv for pointwise voltages) and report.json.

    Args:
        config (RunConfig): Validated configuration.
        output_dir (str | Path, optional): Overrides config.output_dir.

    Returns:
        RunReport: The report.

    Raises:
        PipelineError: Naming the failed stage.
    """
    output_dir = Path(output_dir or config.output_dir)
    report = RunReport(regime=config.regime, bc_type=config.circuit.bc_type)
    tensors, residuals, norm = homogenize(config, report.timings)
    report.residuals.update(residuals)
    report.effective = tensors.to_dict()
    report.materials = material_margins(config)
    with stage("plate", report.timings):
        solution = solve_plate(config, tensors)
    report.residuals["plate"] = solution.residual
    report.summary = solution.summary()
    report.summary["largest_corrector_entry"] = norm
    report.checks["energy_identity"] = _energy_check(solution)
    with stage("output", report.timings):
        report.artifacts.append(
            serialization.write_effective_tensors(
                output_dir / serialization.EFFECTIVE_TENSORS_FILE, tensors
            )
        )
        report.artifacts.extend(serialization.write_solution(output_dir, solution))
        report.artifacts.append(output_dir / serialization.REPORT_FILE)
        serialization.write_json(report.artifacts[-1], report.to_dict())
    logger.info("Run %s", "passed" if report.passed else "FAILED")
    return report


def _flatten(tensors):
    values = {}
    for key in tensors.KEYS:
        if key == "vol_Y1":
            continue
        array = np.atleast_1d(np.asarray(getattr(tensors, key)))
        if array.size == 1:
            values[key] = float(array[0])
            continue
        for index in np.ndindex(array.shape):
            values[f"{key}[{','.join(map(str, index))}]"] = float(array[index])
    return values


def richardson_rate(values, levels):
    """Observed order from the last three values of a refinement sequence.

    With mesh sizes h = 1/n the order p solves
    (h0^p - h1^p) / (h1^p - h2^p) = |v1 - v0| / |v2 - v1|,
    which reduces to log(d1 / d2) / log(r) when both refinement steps share
    the ratio r.

    Returns:
        tuple: (rate, exact); rate is NaN when the values do not change, when
        one step leaves them unchanged or when no order fits.
    """
    v0, v1, v2 = values[-3:]
    n0, n1, n2 = (float(n) for n in levels[-3:])
    d1, d2 = abs(v1 - v0), abs(v2 - v1)
    scale = max(1.0, abs(v2))
    if d1 <= EXACT_TOLERANCE * scale and d2 <= EXACT_TOLERANCE * scale:
        return float("nan"), True
    if d1 == 0.0 or d2 == 0.0:
        return float("nan"), False
    if np.isclose(n1 / n0, n2 / n1, rtol=1e-12):
        return float(np.log(d1 / d2) / np.log(n2 / n1)), False
    a, b = n0 / n1, n1 / n2
    target = np.log(d1 / d2)

    def mismatch(p):
        return np.log1p(-(a**p)) - p * np.log(a) - np.log1p(-(b**p)) - target

    try:
        return float(brentq(mismatch, 1e-8, 50.0, xtol=1e-12)), False
    except ValueError:
        return float("nan"), False


def convergence_study(config, levels, target="cell"):
    """Tabulates quantities over mesh refinements with estimated rates.

    Args:
        config (RunConfig): Base configuration.
        levels (sequence): At least three mesh sizes, in increasing order.
        target (str): "cell" refines the cell mesh and tabulates effective
            tensor entries; "plate" refines the plate mesh (tensors from the
            configured cell mesh) and tabulates the solution summary.

    Returns:
        pandas.DataFrame: One row per quantity, a column per level and the
        columns "rate" and "exact".
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise ConfigurationError("a convergence study needs at least three levels")
    if levels != sorted(levels) or len(set(levels)) != len(levels):
        raise ConfigurationError("levels must be strictly increasing")
    if target not in TARGETS:
        raise ConfigurationError(f"target must be one of {TARGETS}")
    columns = {}
    if target == "cell":
        for n in levels:
            tensors, _, _ = homogenize(config.with_cell_size(n))
            columns[f"n={n}"] = _flatten(tensors)
    else:
        tensors, _, _ = homogenize(config)
        for n in levels:
            with stage("plate"):
                solution = solve_plate(config.with_plate_size(n), tensors)
            summary = solution.summary()
            columns[f"n={n}"] = {
                key: summary[key]
                for key in ("max_deflection", "elastic_energy", "mean_voltage")
            }
    table = pd.DataFrame(columns)
    table.index.name = "quantity"
    rates = [richardson_rate(row.to_numpy(), levels) for _, row in table.iterrows()]
    table["rate"] = [r for r, _ in rates]
    table["exact"] = [e for _, e in rates]
    return table
