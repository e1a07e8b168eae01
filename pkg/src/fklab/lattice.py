"""Finite-range lattice geometry: coupling fields, boxes, bonds, boundaries.

Vertices are tuples of ints; bonds are unordered vertex pairs stored in
canonical order (lexicographically smaller endpoint first) so every bond
has exactly one identity and all enumerations are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

Vertex = tuple
Bond = tuple  # (x, y) with x < y lexicographically


@dataclass(frozen=True)
class CouplingField:
    """Finite-range symmetric coupling weights J_x on Z^d.

    ``couplings`` maps offset vectors to non-negative weights.  The field
    must be symmetric (J_x = J_{-x}) and positive on unit offsets.
    """

    dimension: int
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        clean = {}
        for off, j in self.couplings.items():
            off = tuple(int(c) for c in off)
            if len(off) != self.dimension:
                raise ValueError(f"offset {off} has wrong dimension")
            if j < 0:
                raise ValueError(f"negative coupling at {off}")
            if j > 0:
                clean[off] = float(j)
        for off, j in clean.items():
            neg = tuple(-c for c in off)
            if abs(clean.get(neg, 0.0) - j) > 1e-12:
                raise ValueError(f"couplings not symmetric at {off}")
        for i in range(self.dimension):
            unit = tuple(1 if k == i else 0 for k in range(self.dimension))
            if clean.get(unit, 0.0) <= 0.0:
                raise ValueError("nearest-neighbor couplings must be positive")
        object.__setattr__(self, "couplings", clean)

    @property
    def range(self) -> float:
        """Euclidean length of the longest offset with positive weight."""
        return max(math.sqrt(sum(c * c for c in off)) for off in self.couplings)

    def offsets(self) -> list:
        """All offsets with positive weight, in deterministic order."""
        return sorted(self.couplings)

    def positive_offsets(self) -> list:
        """One representative per +/- offset pair (the lexicographically larger)."""
        return [off for off in sorted(self.couplings) if off > tuple(-c for c in off)]

    def weight(self, offset) -> float:
        return self.couplings.get(tuple(offset), 0.0)


def nearest_neighbor(d: int, J: float = 1.0) -> CouplingField:
    """The standard nearest-neighbor coupling field in dimension d."""
    coup = {}
    for i in range(d):
        unit = tuple(1 if k == i else 0 for k in range(d))
        coup[unit] = J
        coup[tuple(-c for c in unit)] = J
    return CouplingField(d, coup)


@dataclass(frozen=True)
class Box:
    """The box Lambda_N = {-N, ..., N}^d."""

    N: int
    d: int = 2

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("half-width must be >= 0")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    def vertices(self) -> list:
        rng = range(-self.N, self.N + 1)
        return [v for v in product(rng, repeat=self.d)]

    def __contains__(self, v) -> bool:
        return len(v) == self.d and all(-self.N <= c <= self.N for c in v)

    def __len__(self) -> int:
        return (2 * self.N + 1) ** self.d


@dataclass(frozen=True)
class Rect:
    """A general axis-aligned vertex rectangle; used for small test graphs.

    ``shape`` gives the number of vertices per axis; the vertex set is
    {0..shape[0]-1} x ... so a Rect((2, 3)) is the 2x3 grid.
    """

    shape: tuple

    def __post_init__(self):
        if any(s < 1 for s in self.shape):
            raise ValueError("all sides must have >= 1 vertex")

    @property
    def d(self) -> int:
        return len(self.shape)

    def vertices(self) -> list:
        return [v for v in product(*(range(s) for s in self.shape))]

    def __contains__(self, v) -> bool:
        return len(v) == self.d and all(0 <= c < s for c, s in zip(v, self.shape))

    def __len__(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n


def canonical_bond(x, y) -> Bond:
    """Unordered pair as a canonically ordered tuple pair."""
    return (x, y) if x < y else (y, x)


def edge_set(region, couplings: CouplingField) -> list:
    """All bonds with both endpoints in the region, canonically ordered.

    The order (sorted by (smaller endpoint, larger endpoint)) is the bond
    index space used by every bit-vector in the package.
    """
    bonds = set()
    verts = region.vertices()
    for v in verts:
        for off in couplings.positive_offsets():
            w = tuple(a + b for a, b in zip(v, off))
            if w in region:
                bonds.add(canonical_bond(v, w))
    return sorted(bonds)


def outer_boundary(A: Iterable, R: float) -> set:
    """The R-outer boundary {y not in A : d(y, A) <= R}, Euclidean distance.

    Ties at distance exactly R are included.
    """
    A = set(A)
    if not A:
        return set()
    d = len(next(iter(A)))
    reach = int(math.floor(R + 1e-9))
    out = set()
    r2 = R * R + 1e-9
    for v in A:
        for off in product(range(-reach, reach + 1), repeat=d):
            if sum(c * c for c in off) > r2:
                continue
            y = tuple(a + b for a, b in zip(v, off))
            if y not in A:
                out.add(y)
    return out


def boundary_ring(region, couplings: CouplingField) -> list:
    """Vertices of the region having at least one coupling offset leading outside.

    Under wired boundary conditions these are exactly the vertices touched
    by an (always open) exterior bond.
    """
    ring = []
    for v in region.vertices():
        for off in couplings.offsets():
            w = tuple(a + b for a, b in zip(v, off))
            if w not in region:
                ring.append(v)
                break
    return ring
