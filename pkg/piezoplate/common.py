"""The common module contains common functions and classes used by the other modules.

It holds the exception hierarchy, the index maps of the packed 10-component
strain/field vector and the logging setup used by the command line.
"""

import logging

import numpy as np

# Packed ordering (K11, K12, K21, K22, K13, K23, K33, L1, L2, L3).
M_LABELS = ("K11", "K12", "K21", "K22", "K13", "K23", "K33", "L1", "L2", "L3")
MECHANICAL_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (1, 2), (2, 2))
INPLANE = (0, 1, 2, 3)
TRANSVERSE = (4, 5, 6)
ELECTRIC = (7, 8, 9)
L3 = 9
# Projection Pi keeps (K13, K23, K33, L3); Pi1 keeps L3; Pi2 = Pi - Pi1.
PI = (4, 5, 6, 9)
PI1 = (9,)
PI2 = (4, 5, 6)

# Unit in-plane loadings in the packed 4-component (11, 12, 21, 22) ordering.
LOADINGS = ("11", "22", "12")
LOADING_INDEX = {"11": 0, "12": 1, "21": 2, "22": 3}

LOG_FORMAT = "%(asctime)s :: %(levelname)s :: %(name)s :: %(message)s"


class PiezoplateError(Exception):
    """Base class of every error raised by piezoplate."""

    stage = "piezoplate"


class MaterialValidationError(PiezoplateError, ValueError):
    """Constitutive tensors violate their symmetry requirements."""

    stage = "material"


class DegenerateMaterialError(PiezoplateError, ArithmeticError):
    """A condensation sub-block is singular."""

    stage = "material"


class DegenerateCircuitError(PiezoplateError, ArithmeticError):
    """The circuit denominator c + 2|Y1|G is not positive."""

    stage = "circuit"


class GeometryError(PiezoplateError, ValueError):
    """Invalid mesh parameters or inclusion shape."""

    stage = "geometry"


class ConfigurationError(PiezoplateError, ValueError):
    """Incompatible options, spaces or forms."""

    stage = "configuration"


class ConfigParseError(ConfigurationError):
    """A configuration file field is missing, malformed or inconsistent.

    Args:
        field (str): Dotted name of the offending field.
        message (str): What is wrong with it.
    """

    stage = "parse"

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class BoundaryConditionError(PiezoplateError, ValueError):
    """The plate has no clamped boundary part."""

    stage = "boundary"


class SolverError(PiezoplateError, RuntimeError):
    """A linear solve failed.

    Args:
        message (str): Description of the failure.
        residual (float, optional): Relative residual reached, if any.
    """

    stage = "solve"

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (relative residual {residual:.3e})"
        super().__init__(message)


class PipelineError(PiezoplateError):
    """A pipeline stage failed.

    Args:
        stage (str): Name of the failed stage.
        cause (Exception): The underlying error.
    """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


def setup_logging(verbose=False):
    """Configures the root logger with a single stream handler.

    Args:
        verbose (bool): Log DEBUG messages when True, INFO otherwise.
    """
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    for handler in list(root.handlers):
        root.removeHandler(handler)
    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(stream_handler)


def inplane_mandel(packed):
    """Converts a packed (4, 4) in-plane tensor to its 3x3 Mandel matrix.

    The Mandel basis (11, 22, sqrt(2) 12) makes the quadratic form on
    symmetric 2x2 matrices a plain Euclidean one, so inverses and
    eigenvalues are meaningful.
    """
    packed = np.asarray(packed, dtype=float)
    r = np.sqrt(2.0)
    rows = (0, 3, 1)
    scale = np.array([1.0, 1.0, r])
    return packed[..., rows, :][..., :, rows] * scale[:, None] * scale[None, :]


def as_plain(value):
    """Converts arrays to nested lists and numbers to float, for JSON output."""
    return value.tolist() if isinstance(value, np.ndarray) else float(value)
