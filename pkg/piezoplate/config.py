"""Reading run configurations from TOML files.

A configuration defines the two material phases, the inclusion, the cell and
plate meshes, the electric boundary conditions and the loads. Constraints
between sections (Dirichlet conditions carry no circuit and no current
source, mixed conditions no imposed voltage) are enforced here so that the
solvers never see an inconsistent combination.
"""

import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .common import ConfigParseError, ConfigurationError, PiezoplateError
from .femcore import EDGES, InclusionShape
from .loads import Loads, Polynomial
from .material import ElasticTensor, PermittivityTensor, PhaseMaterial, PiezoTensor

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

REGIMES = ("thin", "comparable")
BC_TYPES = ("dirichlet", "neumann", "local_mixed", "nonlocal_mixed")
MIXED = ("neumann", "local_mixed", "nonlocal_mixed")


@dataclass(frozen=True)
class CircuitConfig:
    """Electric boundary conditions.

    Attributes:
        bc_type (str): dirichlet, neumann, local_mixed or nonlocal_mixed.
        G (float): Admittance of the local circuits.
        G1 (float): Admittance of the circuits linking neighbouring inclusions.
        flexion_piezo (str): Coupling used in the flexion row of the
            comparable Dirichlet load, "d_MM" or "d_NM".
    """

    bc_type: str = "dirichlet"
    G: float = 0.0
    G1: float = 0.0
    flexion_piezo: str = "d_MM"


@dataclass(frozen=True)
class PlateConfig:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 32
    ny: int = 32
    clamped_edges: tuple = EDGES


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A complete, validated run definition.

    Attributes:
        regime (str): "thin" or "comparable".
        matrix (PhaseMaterial): Matrix phase.
        inclusion_material (PhaseMaterial): Inclusion phase.
        inclusion (InclusionShape): Inclusion geometry.
        cell2d_n (int): Subdivisions of the 2D cell mesh.
        cell3d_n (int): In-plane subdivisions of the 3D cell mesh.
        cell3d_nz (int): Subdivisions across the thickness.
        plate (PlateConfig): Plate geometry and mesh.
        circuit (CircuitConfig): Electric boundary conditions.
        loads (Loads): Loads, with the circuit constants attached.
        output_dir (Path): Artifact directory.
        source (Path): File the configuration was read from, if any.
    """

    regime: str
    matrix: PhaseMaterial
    inclusion_material: PhaseMaterial
    inclusion: InclusionShape
    cell2d_n: int = 64
    cell3d_n: int = 16
    cell3d_nz: int = 8
    plate: PlateConfig = field(default_factory=PlateConfig)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    loads: Loads = field(default_factory=Loads)
    output_dir: Path = Path("output")
    source: Path = None

    def with_cell_size(self, n):
        """Copy with the cell mesh of the active regime refined to n."""
        if self.regime == "thin":
            return replace(self, cell2d_n=int(n))
        return replace(self, cell3d_n=int(n))

    def with_plate_size(self, n):
        """Copy with an n x n plate mesh."""
        return replace(self, plate=replace(self.plate, nx=int(n), ny=int(n)))


def _section(data, name):
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigParseError(name, "expected a table")
    return value


def _number(table, key, prefix, default=None, minimum=None, integer=False):
    name = f"{prefix}.{key}"
    value = table.get(key, default)
    if value is None:
        raise ConfigParseError(name, "is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigParseError(name, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigParseError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigParseError(name, f"must be >= {minimum}, got {value}")
    return int(value) if integer else float(value)


def _polynomial(value, name):
    try:
        return Polynomial.parse(value)
    except ConfigurationError as err:
        raise ConfigParseError(name, str(err)) from err


def _polynomial_triple(value, name):
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigParseError(name, "expected a list of three polynomials")
    return tuple(_polynomial(v, f"{name}[{k}]") for k, v in enumerate(value))


def _phase(table, name):
    prefix = f"materials.{name}"
    if not isinstance(table, dict):
        raise ConfigParseError(prefix, "missing material table")
    try:
        if "R" in table:
            elastic = ElasticTensor.from_voigt(table["R"])
        elif "lambda" in table and "mu" in table:
            elastic = ElasticTensor.isotropic(
                _number(table, "lambda", prefix), _number(table, "mu", prefix)
            )
        else:
            raise ConfigParseError(
                prefix, "give either R (21 entries) or lambda and mu"
            )
        piezo = PiezoTensor.from_voigt(table["d"]) if "d" in table else PiezoTensor()
        if "c" in table:
            permittivity = PermittivityTensor.from_voigt(table["c"])
        else:
            permittivity = PermittivityTensor()
    except (ValueError, TypeError) as err:
        if isinstance(err, ConfigParseError):
            raise
        raise ConfigParseError(prefix, str(err)) from err
    return PhaseMaterial(name, elastic, piezo, permittivity)


def _inclusion(table):
    try:
        return InclusionShape(
            kind=str(table.get("shape", "disk")),
            size=_number(table, "size", "inclusion", default=0.25, minimum=0.0),
            center=tuple(float(c) for c in table.get("center", (0.0, 0.0))),
        )
    except PiezoplateError as err:
        if isinstance(err, ConfigParseError):
            raise
        raise ConfigParseError("inclusion", str(err)) from err


def _plate(table):
    edges = table.get("clamped_edges", list(EDGES))
    if not isinstance(edges, list) or not edges:
        raise ConfigParseError(
            "plate.clamped_edges", "expected a nonempty list of edges"
        )
    unknown = sorted(set(edges) - set(EDGES))
    if unknown:
        raise ConfigParseError("plate.clamped_edges", f"unknown edges {unknown}")
    return PlateConfig(
        lx=_number(table, "lx", "plate", default=1.0),
        ly=_number(table, "ly", "plate", default=1.0),
        nx=_number(table, "nx", "plate", default=32, minimum=1, integer=True),
        ny=_number(table, "ny", "plate", default=32, minimum=1, integer=True),
        clamped_edges=tuple(e for e in EDGES if e in edges),
    )


def _circuit(table):
    bc_type = table.get("bc_type", "dirichlet")
    if bc_type not in BC_TYPES:
        raise ConfigParseError("circuit.bc_type", f"must be one of {BC_TYPES}")
    flexion_piezo = table.get("flexion_piezo", "d_MM")
    if flexion_piezo not in ("d_MM", "d_NM"):
        raise ConfigParseError("circuit.flexion_piezo", "must be 'd_MM' or 'd_NM'")
    circuit = CircuitConfig(
        bc_type=bc_type,
        G=_number(table, "G", "circuit", default=0.0, minimum=0.0),
        G1=_number(table, "G1", "circuit", default=0.0, minimum=0.0),
        flexion_piezo=flexion_piezo,
    )
    if bc_type in ("dirichlet", "neumann") and circuit.G != 0.0:
        raise ConfigParseError("circuit.G", f"must be 0 with {bc_type} conditions")
    if bc_type in ("dirichlet", "neumann", "local_mixed") and circuit.G1 != 0.0:
        raise ConfigParseError("circuit.G1", f"must be 0 with {bc_type} conditions")
    return circuit


def _loads(table, circuit, clamped_edges):
    edges = {}
    for edge, edge_table in _section(table, "edges").items():
        name = f"loads.edges.{edge}"
        if edge not in EDGES:
            raise ConfigParseError(name, f"unknown edge; use {EDGES}")
        if edge in clamped_edges:
            raise ConfigParseError(name, "lateral forces act on free edges only")
        edges[edge] = _polynomial_triple(edge_table.get("g"), f"{name}.g")
    phi_c = _polynomial(table.get("phi_c", 0.0), "loads.phi_c")
    h = _polynomial(table.get("h", 0.0), "loads.h")
    if circuit.bc_type == "dirichlet" and not h.is_zero:
        raise ConfigParseError(
            "loads.h", "the current source must vanish with Dirichlet conditions"
        )
    if circuit.bc_type in MIXED and not phi_c.is_zero:
        raise ConfigParseError(
            "loads.phi_c", "the imposed voltage must vanish with mixed conditions"
        )
    return Loads(
        f=_polynomial_triple(table.get("f"), "loads.f"),
        g_top=_polynomial_triple(table.get("g_top"), "loads.g_top"),
        g_bottom=_polynomial_triple(table.get("g_bottom"), "loads.g_bottom"),
        g_edges=edges,
        phi_c=phi_c,
        h=h,
        G=circuit.G,
        G1=circuit.G1,
    )


def config_from_dict(data, source=None):
    """Builds a RunConfig from the parsed TOML tables.

    Args:
        data (dict): Parsed document.
        source (Path, optional): File it came from.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigParseError: Naming the first offending field.
    """
    regime = data.get("regime", "thin")
    if regime not in REGIMES:
        raise ConfigParseError("regime", f"must be one of {REGIMES}, got {regime!r}")
    materials = _section(data, "materials")
    for name in ("matrix", "inclusion"):
        if name not in materials:
            raise ConfigParseError(f"materials.{name}", "missing material table")
    cell2d = _section(data, "cell2d")
    cell3d = _section(data, "cell3d")
    plate = _plate(_section(data, "plate"))
    circuit = _circuit(_section(data, "circuit"))
    output = _section(data, "output")
    return RunConfig(
        regime=regime,
        matrix=_phase(materials["matrix"], "matrix"),
        inclusion_material=_phase(materials["inclusion"], "inclusion"),
        inclusion=_inclusion(_section(data, "inclusion")),
        cell2d_n=_number(cell2d, "n", "cell2d", default=64, minimum=4, integer=True),
        cell3d_n=_number(cell3d, "n", "cell3d", default=16, minimum=4, integer=True),
        cell3d_nz=_number(cell3d, "nz", "cell3d", default=8, minimum=1, integer=True),
        plate=plate,
        circuit=circuit,
        loads=_loads(_section(data, "loads"), circuit, plate.clamped_edges),
        output_dir=Path(output.get("directory", "output")),
        source=source,
    )


def parse_config(path):
    """Reads and validates a TOML run configuration.

    Args:
        path (str | Path): Configuration file.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigParseError: If the file is missing, malformed or inconsistent.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigParseError(str(path), "file not found")
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as err:
        raise ConfigParseError(str(path), f"malformed TOML: {err}") from err
    config = config_from_dict(data, source=path)
    logger.info(
        "Read %s: %s regime, %s conditions",
        path.name,
        config.regime,
        config.circuit.bc_type,
    )
    return config
