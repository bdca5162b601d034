"""Unit-cell geometry of stiff/soft checkerboards.

The periodicity cell (0,1]^2 splits into two stiff squares (lower-left and
upper-right) and two soft rectangles, controlled by a single volume-fraction
parameter ``lam``.  All tiles are half-open boxes (x0,x1] x (y0,y1], so every
point of the plane belongs to exactly one tile of exactly one lattice cell and
periodic lookup needs no tolerance fudging.

Everything here is immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class GeometryError(ValueError):
    """Parameter outside its admissible domain."""


class Tile(Enum):
    """The four tiles of the unit cell; Y1/Y3 are stiff, Y2/Y4 soft."""

    Y1 = "Y1"
    Y2 = "Y2"
    Y3 = "Y3"
    Y4 = "Y4"

    @property
    def stiff(self):
        return self in (Tile.Y1, Tile.Y3)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned half-open box (x0,x1] x (y0,y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return np.array([0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)])

    def corners(self):
        """Counterclockwise corners starting at the lower-left."""
        return np.array(
            [
                [self.x0, self.y0],
                [self.x1, self.y0],
                [self.x1, self.y1],
                [self.x0, self.y1],
            ]
        )

    def contains(self, p):
        """Half-open membership test."""
        return (self.x0 < p[0] <= self.x1) and (self.y0 < p[1] <= self.y1)

    def intersect(self, other):
        """Intersection rectangle, or None when the interiors are disjoint."""
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x0 >= x1 or y0 >= y1:
            return None
        return Rect(x0, y0, x1, y1)

    def shifted(self, d):
        return Rect(self.x0 + d[0], self.y0 + d[1], self.x1 + d[0], self.y1 + d[1])

    def scaled(self, s):
        return Rect(s * self.x0, s * self.y0, s * self.x1, s * self.y1)


@dataclass(frozen=True)
class CellPartition:
    """The lam-parameterized subdivision of the unit cell (0,1]^2."""

    lam: float

    @property
    def tiles(self):
        lam = self.lam
        return {
            Tile.Y1: Rect(0.0, 0.0, lam, lam),
            Tile.Y2: Rect(0.0, lam, lam, 1.0),
            Tile.Y3: Rect(lam, lam, 1.0, 1.0),
            Tile.Y4: Rect(lam, 0.0, 1.0, lam),
        }

    @property
    def area_stiff(self):
        return self.lam**2 + (1.0 - self.lam) ** 2

    @property
    def area_soft(self):
        return 2.0 * self.lam * (1.0 - self.lam)

    def tile_of(self, y):
        """Tile containing a unit-cell point y in (0,1]^2 (half-open rule)."""
        if y[0] <= self.lam:
            return Tile.Y1 if y[1] <= self.lam else Tile.Y2
        return Tile.Y4 if y[1] <= self.lam else Tile.Y3


def build_partition(lam):
    """Validated partition of the unit cell for lam in (0,1)."""
    lam = float(lam)
    if not (0.0 < lam < 1.0) or math.isnan(lam):
        raise GeometryError(f"volume fraction must lie strictly inside (0,1), got {lam}")
    return CellPartition(lam)


@dataclass(frozen=True)
class LatticeIndex:
    """Integer cell index k at length scale eps; the cell is eps*(k+(0,1]^2)."""

    k: tuple
    eps: float

    @property
    def origin(self):
        return np.array([self.eps * self.k[0], self.eps * self.k[1]])

    def cell(self):
        e, (k1, k2) = self.eps, self.k
        return Rect(e * k1, e * k2, e * (k1 + 1), e * (k2 + 1))

    def tile_rect(self, partition, tile):
        r = partition.tiles[tile]
        e, (k1, k2) = self.eps, self.k
        return Rect(
            e * (k1 + r.x0), e * (k2 + r.y0), e * (k1 + r.x1), e * (k2 + r.y1)
        )


def cell_index_of(x, eps):
    """The unique k with x in eps*(k+(0,1]^2)."""
    return (int(math.ceil(x[0] / eps)) - 1, int(math.ceil(x[1] / eps)) - 1)


def tile_at(partition, x, eps):
    """Periodic lookup: the lattice cell and tile containing a point of R^2.

    Total on the plane; boundary points resolve via the half-open convention
    (they belong to the tile whose closure reaches them from the lower left).
    """
    if eps <= 0:
        raise GeometryError(f"length scale must be positive, got {eps}")
    k = cell_index_of(x, eps)
    y = (x[0] / eps - k[0], x[1] / eps - k[1])
    return LatticeIndex(k, eps), partition.tile_of(y)


def _as_rect_list(domain):
    if domain is None:
        return []
    if isinstance(domain, Rect):
        return [domain]
    return list(domain)


@dataclass(frozen=True)
class LatticeSelection:
    """Cells meeting a domain, plus the subset whose 3x3 block is interior."""

    cells: tuple
    interior: tuple
    eps: float


def lattice_cells(domain, eps):
    """All k whose cell eps*(k+(0,1]^2) meets the domain (open rectangles).

    The interior subset collects those k whose 3x3 neighborhood block of
    cells fits inside a single rectangle of the domain; for the union of
    several rectangles this is a conservative test (sufficient for the
    desk-scale experiments, which use one rectangle).
    """
    if eps <= 0:
        raise GeometryError(f"length scale must be positive, got {eps}")
    rects = _as_rect_list(domain)
    cells = set()
    interior = set()
    for r in rects:
        if r.area <= 0:
            continue
        k1_lo = int(math.floor(r.x0 / eps)) - 1
        k1_hi = int(math.ceil(r.x1 / eps)) + 1
        k2_lo = int(math.floor(r.y0 / eps)) - 1
        k2_hi = int(math.ceil(r.y1 / eps)) + 1
        for k1 in range(k1_lo, k1_hi + 1):
            for k2 in range(k2_lo, k2_hi + 1):
                # (eps*k, eps*(k+1)] meets the open rect iff eps*k < hi and lo < eps*(k+1)
                if (
                    eps * k1 < r.x1
                    and r.x0 < eps * (k1 + 1)
                    and eps * k2 < r.y1
                    and r.y0 < eps * (k2 + 1)
                ):
                    cells.add((k1, k2))
    for k1, k2 in cells:
        for r in rects:
            if (
                eps * (k1 - 1) >= r.x0
                and eps * (k1 + 2) < r.x1
                and eps * (k2 - 1) >= r.y0
                and eps * (k2 + 2) < r.y1
            ):
                interior.add((k1, k2))
                break
    return LatticeSelection(tuple(sorted(cells)), tuple(sorted(interior)), eps)


@dataclass(frozen=True)
class CrossStructure:
    """One soft rectangle with its four stiff neighbor squares.

    E0 is the soft rectangle; E1, E3 are the squares on its two long edges
    (they share one rotation in an exact mechanism state), E2, E4 sit on the
    short edges.  ``swapped`` records whether the long edges are vertical
    (lam < 1/2), in which case the square identities exchange e1 and e2.
    """

    rho: float
    mu: float
    anchor: tuple
    E0: Rect
    E1: Rect
    E2: Rect
    E3: Rect
    E4: Rect
    swapped: bool
    index: LatticeIndex

    def squares(self):
        return (self.E1, self.E2, self.E3, self.E4)


def cross_structure(index, partition):
    """The cross around the soft tile eps*(k+Y2).

    Normalization keeps the side ratio mu in (0,1]: for lam >= 1/2 the long
    edges of the soft rectangle are horizontal with rho = lam*eps and
    mu = (1-lam)/lam; for lam < 1/2 the roles swap (rho = (1-lam)*eps,
    mu = lam/(1-lam)) so that the same normalized cross applies.
    """
    lam = partition.lam
    eps = index.eps
    k1, k2 = index.k

    def tr(dk1, dk2, tile):
        return LatticeIndex((k1 + dk1, k2 + dk2), eps).tile_rect(partition, tile)

    E0 = tr(0, 0, Tile.Y2)
    below = tr(0, 0, Tile.Y1)
    above = tr(0, 1, Tile.Y1)
    left = tr(-1, 0, Tile.Y3)
    right = tr(0, 0, Tile.Y3)
    if lam >= 0.5:
        rho = lam * eps
        mu = (1.0 - lam) / lam
        anchor = (eps * k1, eps * (k2 + lam))
        cross = CrossStructure(
            rho, mu, anchor, E0, below, left, above, right, False, index
        )
    else:
        rho = (1.0 - lam) * eps
        mu = lam / (1.0 - lam)
        anchor = (eps * k1, eps * (k2 + lam))
        cross = CrossStructure(
            rho, mu, anchor, E0, left, below, right, above, True, index
        )
    return cross
