"""Polynomial load data and its reduction through the plate thickness.

Loads are polynomials in (x1, x2, x3) of total degree at most 3. For a
Kirchhoff-Love field v = (vbar - x3 grad v3, v3) the volume and surface work
reduces to midplane quantities: a membrane force F, a distributed moment M
paired with grad v3, a transverse force F3 and, on free edges, line forces,
line moments and transverse line forces.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .common import ConfigurationError
from .femcore import EDGES

MAX_DEGREE = 3
_FACTOR = re.compile(r"^x([123])(?:\^(\d+))?$")


def _monomial(text):
    text = text.replace(" ", "")
    powers = [0, 0, 0]
    if text == "1":
        return tuple(powers)
    for factor in text.split("*"):
        match = _FACTOR.match(factor)
        if match is None:
            raise ConfigurationError(f"cannot read monomial {text!r}")
        powers[int(match.group(1)) - 1] += int(match.group(2) or 1)
    return tuple(powers)


def _monomial_label(powers):
    factors = [
        f"x{i + 1}" if p == 1 else f"x{i + 1}^{p}" for i, p in enumerate(powers) if p
    ]
    return "*".join(factors) or "1"


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in (x1, x2, x3) stored as {(p1, p2, p3): coefficient}."""

    terms: tuple = ()

    def __post_init__(self):
        merged = {}
        for powers, coeff in self.terms:
            powers = tuple(int(p) for p in powers)
            merged[powers] = merged.get(powers, 0.0) + float(coeff)
        cleaned = tuple(sorted((p, c) for p, c in merged.items() if c != 0.0))
        object.__setattr__(self, "terms", cleaned)
        if self.degree > MAX_DEGREE:
            raise ConfigurationError(
                f"load polynomials are limited to degree {MAX_DEGREE}, "
                f"got {self.degree}"
            )

    @classmethod
    def constant(cls, value):
        return cls((((0, 0, 0), value),))

    @classmethod
    def parse(cls, raw):
        """Reads a number or a {monomial: coefficient} table.

        Monomials are written like "1", "x3", "x1*x2" or "x1^2*x3".
        """
        if isinstance(raw, Polynomial):
            return raw
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return cls.constant(raw)
        if isinstance(raw, dict):
            return cls(tuple((_monomial(k), v) for k, v in raw.items()))
        raise ConfigurationError(f"cannot read polynomial from {raw!r}")

    @property
    def degree(self):
        return max((sum(p) for p, _ in self.terms), default=0)

    @property
    def is_zero(self):
        return not self.terms

    def __call__(self, x1, x2, x3=0.0):
        x1, x2, x3 = np.broadcast_arrays(
            np.asarray(x1, float), np.asarray(x2, float), np.asarray(x3, float)
        )
        out = np.zeros(x1.shape)
        for (p1, p2, p3), coeff in self.terms:
            out = out + coeff * x1**p1 * x2**p2 * x3**p3
        return out

    def at(self, points):
        """Evaluates at points (..., 2) or (..., 3); x3 = 0 for planar points."""
        points = np.asarray(points, dtype=float)
        x3 = points[..., 2] if points.shape[-1] > 2 else 0.0
        return self(points[..., 0], points[..., 1], x3)

    def __add__(self, other):
        return Polynomial(self.terms + Polynomial.parse(other).terms)

    __radd__ = __add__

    def __sub__(self, other):
        return self + -Polynomial.parse(other)

    def __rsub__(self, other):
        return Polynomial.parse(other) + -self

    def __mul__(self, factor):
        return Polynomial(tuple((p, factor * c) for p, c in self.terms))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def thickness_moment(self, k):
        """Integral over x3 in (-1, 1) of x3^k times the polynomial."""
        terms = []
        for (p1, p2, p3), coeff in self.terms:
            power = p3 + k
            if power % 2 == 0:
                terms.append(((p1, p2, 0), coeff * 2.0 / (power + 1)))
        return Polynomial(tuple(terms))

    def restrict_x3(self, value):
        """Polynomial in (x1, x2) obtained by fixing x3."""
        return Polynomial(
            tuple(((p1, p2, 0), c * value**p3) for (p1, p2, p3), c in self.terms)
        )

    def to_config(self):
        return {_monomial_label(p): c for p, c in self.terms}


ZERO = Polynomial()


def _triple(value):
    if value is None:
        return (ZERO, ZERO, ZERO)
    if len(value) != 3:
        raise ConfigurationError(f"expected three components, got {len(value)}")
    return tuple(Polynomial.parse(v) for v in value)


@dataclass(frozen=True, eq=False)
class Loads:
    """Plate loads and circuit constants.

    Attributes:
        f: Volume force, three polynomials in (x1, x2, x3).
        g_top: Surface force on the face x3 = 1.
        g_bottom: Surface force on the face x3 = -1.
        g_edges (dict): Lateral surface force per free edge.
        phi_c: Imposed voltage (Dirichlet conditions).
        h: Current source (mixed conditions).
        G (float): Admittance of the local circuits.
        G1 (float): Admittance of the circuits linking neighbouring inclusions.
    """

    f: tuple = None
    g_top: tuple = None
    g_bottom: tuple = None
    g_edges: dict = field(default_factory=dict)
    phi_c: Polynomial = ZERO
    h: Polynomial = ZERO
    G: float = 0.0
    G1: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f", _triple(self.f))
        object.__setattr__(self, "g_top", _triple(self.g_top))
        object.__setattr__(self, "g_bottom", _triple(self.g_bottom))
        edges = {}
        for edge, value in dict(self.g_edges).items():
            if edge not in EDGES:
                raise ConfigurationError(f"unknown edge {edge!r}")
            edges[edge] = _triple(value)
        object.__setattr__(self, "g_edges", edges)
        object.__setattr__(self, "phi_c", Polynomial.parse(self.phi_c))
        object.__setattr__(self, "h", Polynomial.parse(self.h))
        if self.G < 0 or self.G1 < 0:
            raise ConfigurationError("circuit constants G and G1 must be nonnegative")

    def scaled(self, factor):
        """Loads multiplied by a factor; circuit constants unchanged."""
        return Loads(
            f=tuple(factor * p for p in self.f),
            g_top=tuple(factor * p for p in self.g_top),
            g_bottom=tuple(factor * p for p in self.g_bottom),
            g_edges={e: tuple(factor * p for p in v) for e, v in self.g_edges.items()},
            phi_c=factor * self.phi_c,
            h=factor * self.h,
            G=self.G,
            G1=self.G1,
        )

    def __add__(self, other):
        edges = dict(self.g_edges)
        for edge, value in other.g_edges.items():
            mine = edges.get(edge, (ZERO, ZERO, ZERO))
            edges[edge] = tuple(a + b for a, b in zip(mine, value))
        return Loads(
            f=tuple(a + b for a, b in zip(self.f, other.f)),
            g_top=tuple(a + b for a, b in zip(self.g_top, other.g_top)),
            g_bottom=tuple(a + b for a, b in zip(self.g_bottom, other.g_bottom)),
            g_edges=edges,
            phi_c=self.phi_c + other.phi_c,
            h=self.h + other.h,
            G=self.G,
            G1=self.G1,
        )


@dataclass(frozen=True)
class EdgeLoad:
    """Thickness-reduced lateral force on one free edge."""

    N: tuple
    m: tuple
    n3: Polynomial


@dataclass(frozen=True, eq=False)
class ReducedLoads:
    """Midplane load data.

    Attributes:
        F (tuple): Membrane force (F1, F2).
        M (tuple): Distributed moment (M1, M2), paired with grad v3.
        F3 (Polynomial): Transverse force.
        edges (dict): EdgeLoad per free edge.
    """

    F: tuple
    M: tuple
    F3: Polynomial
    edges: dict


def reduce_loads(loads, mesh):
    """Integrates the loads through the thickness.

    F_a = int f_a dx3 + g_top_a + g_bottom_a,
    M_a = -int x3 f_a dx3 - g_top_a + g_bottom_a,
    F3 = int f_3 dx3 + g_top_3 + g_bottom_3,
    with the surface forces taken at x3 = 1 and x3 = -1.

    Args:
        loads (Loads): Load data.
        mesh (PlateMesh): Plate mesh; lateral forces must act on free edges.

    Returns:
        ReducedLoads: Polynomials in (x1, x2).

    Raises:
        ConfigurationError: If a lateral force acts on a clamped edge.
    """
    top = [g.restrict_x3(1.0) for g in loads.g_top]
    bottom = [g.restrict_x3(-1.0) for g in loads.g_bottom]
    F = tuple(loads.f[a].thickness_moment(0) + top[a] + bottom[a] for a in range(2))
    M = tuple(-loads.f[a].thickness_moment(1) - top[a] + bottom[a] for a in range(2))
    F3 = loads.f[2].thickness_moment(0) + top[2] + bottom[2]
    edges = {}
    for edge, g in loads.g_edges.items():
        if edge in mesh.clamped_edges:
            raise ConfigurationError(f"lateral force given on clamped edge {edge!r}")
        edges[edge] = EdgeLoad(
            N=(g[0].thickness_moment(0), g[1].thickness_moment(0)),
            m=(-g[0].thickness_moment(1), -g[1].thickness_moment(1)),
            n3=g[2].thickness_moment(0),
        )
    return ReducedLoads(F=F, M=M, F3=F3, edges=edges)
