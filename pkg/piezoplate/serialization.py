"""JSON and CSV artifacts of a run.

JSON floats are written with `repr`, so effective tensors read back are
bitwise equal to the ones written. Keys keep their insertion order, which
makes identical runs produce identical files.
"""

import json
import logging
from pathlib import Path

import numpy as np

from .cell2d import EffectiveTensorsThin
from .cell3d import EffectiveTensorsComparable
from .common import ConfigurationError, as_plain
from .femcore import quadrature_points
from .plate import PLATE_ORDER

logger = logging.getLogger(__name__)

EFFECTIVE_TENSORS_FILE = "effective_tensors.json"
SOLUTION_FILE = "solution.json"
NODAL_FILE = "solution_nodes.csv"
ELEMENT_FILE = "solution_elements.csv"
REPORT_FILE = "report.json"

_TENSOR_CLASSES = {
    "thin": EffectiveTensorsThin,
    "comparable": EffectiveTensorsComparable,
}


def _default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.ndarray, np.floating)):
        return as_plain(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(data):
    return json.dumps(data, indent=2, default=_default, allow_nan=True) + "\n"


def write_json(path, data):
    """Writes a JSON document, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data))
    logger.debug("Wrote %s", path)
    return path


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"{path}: file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path}: malformed JSON ({err})") from err


def effective_tensors_to_dict(tensors):
    regime = "thin" if isinstance(tensors, EffectiveTensorsThin) else "comparable"
    return {"regime": regime, "tensors": tensors.to_dict()}


def effective_tensors_from_dict(data):
    """Rebuilds EffectiveTensorsThin or EffectiveTensorsComparable."""
    regime = data.get("regime")
    if regime not in _TENSOR_CLASSES:
        raise ConfigurationError(f"unknown effective tensor regime {regime!r}")
    try:
        return _TENSOR_CLASSES[regime].from_dict(data["tensors"])
    except (KeyError, ValueError) as err:
        raise ConfigurationError(
            f"incomplete {regime} effective tensors: {err}"
        ) from err


def write_effective_tensors(path, tensors):
    return write_json(path, effective_tensors_to_dict(tensors))


def read_effective_tensors(path):
    return effective_tensors_from_dict(read_json(path))


def solution_to_dict(solution):
    """Summary, nodal values and quadrature-point voltage as plain data.

    The "quadrature" table holds L3 at the plate quadrature points with
    shape (elements, points per element); it is the only exact record of a
    pointwise voltage.
    """
    table = solution.nodal_table()
    points, _ = quadrature_points(solution.space.mesh, PLATE_ORDER)
    return {
        "summary": solution.summary(),
        "voltage_space": solution.voltage_space.kind,
        "nodes": {column: table[column].tolist() for column in table.columns},
        "quadrature": {
            "order": PLATE_ORDER,
            "x1": points[..., 0].tolist(),
            "x2": points[..., 1].tolist(),
            "L3": solution.voltage_values().tolist(),
        },
    }


def quadrature_voltage_from_dict(data):
    """Quadrature points (ne, nq, 2) and voltage (ne, nq) of a solution.json."""
    try:
        quadrature = data["quadrature"]
        points = np.stack([quadrature["x1"], quadrature["x2"]], axis=-1)
        voltage = np.asarray(quadrature["L3"], dtype=float)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigurationError(f"incomplete quadrature voltage: {err}") from err
    if voltage.shape != points.shape[:-1]:
        raise ConfigurationError(
            f"quadrature voltage of shape {voltage.shape} does not match "
            f"points of shape {points.shape[:-1]}"
        )
    return points, voltage


def read_quadrature_voltage(path):
    return quadrature_voltage_from_dict(read_json(path))


def write_solution(directory, solution):
    """Writes solution.json and the nodal (and element) CSV tables.

    Returns:
        list: Paths written.
    """
    directory = Path(directory)
    paths = [write_json(directory / SOLUTION_FILE, solution_to_dict(solution))]
    paths.append(directory / NODAL_FILE)
    solution.nodal_table().to_csv(paths[-1], index=False, float_format="%.17g")
    if solution.voltage_space.kind == "pointwise":
        paths.append(directory / ELEMENT_FILE)
        solution.element_table().to_csv(paths[-1], index=False, float_format="%.17g")
    return paths
