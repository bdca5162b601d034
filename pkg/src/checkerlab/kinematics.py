"""Rotating-squares kinematics: explicit piecewise-affine deformations.

Builds the exact mechanism maps of the checkerboard (two rotations, four tile
gradients), the reflection branches coupling neighboring squares on a soft
rectangle, the boundary-trace classifier for a single soft tile, orientation
and non-interpenetration checks, and the sub-quadratic-regime microcrack
construction whose mean gradient realizes an arbitrary matrix.

Maps are immutable; evaluation is vectorized over sample points.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import CellPartition, Rect, Tile, build_partition, cell_index_of

TRACE_TOL = 1e-9  # vertex compatibility: inputs are synthesized, mismatch is a bug


class KinematicsError(ValueError):
    pass


class BranchDegenerateError(KinematicsError):
    """Reflection branch undefined (vanishing denominator at mu=1)."""


class InvalidTraceError(KinematicsError):
    """Corner motions incompatible beyond tolerance."""


# ---------------------------------------------------------------------------
# small 2x2 helpers

def rot(theta):
    """Rotation matrix by theta radians."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def perp_vec(a):
    """a^perp = (-a2, a1)."""
    return np.array([-a[1], a[0]])


def perp_mat(A):
    """A^perp = (Ae2 | -Ae1)."""
    return np.column_stack([A[:, 1], -A[:, 0]])


def det2(A):
    return A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]


def frob(A):
    return float(np.sqrt(np.sum(np.asarray(A) ** 2)))


def is_rotation(Q, tol=1e-10):
    Q = np.asarray(Q)
    return (
        abs(Q[:, 0] @ Q[:, 0] - 1.0) <= tol
        and abs(Q[:, 1] @ Q[:, 1] - 1.0) <= tol
        and abs(Q[:, 0] @ Q[:, 1]) <= tol
        and abs(det2(Q) - 1.0) <= tol
    )


def rotation_from_first_column(a):
    """The rotation whose first column is the unit vector a."""
    return np.column_stack([a, perp_vec(a)])


def columns(S, R):
    """(Se1|Re2): first column from S, second from R."""
    return np.column_stack([S[:, 0], R[:, 1]])


# ---------------------------------------------------------------------------
# the mechanism map

@dataclass(frozen=True)
class PiecewiseAffineMap:
    """Continuous piecewise-affine deformation of the eps-checkerboard.

    Per tile the gradient is constant: S on the lower-left squares, R on the
    upper-right ones, and the mixed-column matrices on the soft rectangles.
    Lattice vertices eps*k map to translation + eps*F_bar*k with
    F_bar = lam*S + (1-lam)*R, so the drift per lattice step is eps*F_bar.
    """

    partition: CellPartition
    eps: float
    S: np.ndarray
    R: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", np.asarray(self.S, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @property
    def tile_gradients(self):
        S, R = self.S, self.R
        return {
            Tile.Y1: S,
            Tile.Y3: R,
            Tile.Y2: columns(S, R),
            Tile.Y4: columns(R, S),
        }

    @property
    def tile_offsets(self):
        """Per-tile affine offsets (in cell-local coordinates, units of eps)."""
        lam = self.partition.lam
        d = self.eps * lam * (self.S - self.R)
        z = np.zeros(2)
        return {
            Tile.Y1: z,
            Tile.Y3: d @ np.array([1.0, 1.0]),
            Tile.Y2: d @ np.array([0.0, 1.0]),
            Tile.Y4: d @ np.array([1.0, 0.0]),
        }

    @property
    def drift(self):
        lam = self.partition.lam
        return self.eps * (lam * self.S + (1.0 - lam) * self.R)

    def evaluate(self, x):
        """Map points (..., 2); defined on the whole plane."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        k = np.ceil(pts / self.eps) - 1.0
        loc = pts - self.eps * k
        y = loc / self.eps
        lam = self.partition.lam
        out = k @ self.drift.T + self.translation
        grads = self.tile_gradients
        offs = self.tile_offsets
        in1 = (y[:, 0] <= lam) & (y[:, 1] <= lam)
        in2 = (y[:, 0] <= lam) & (y[:, 1] > lam)
        in3 = (y[:, 0] > lam) & (y[:, 1] > lam)
        in4 = (y[:, 0] > lam) & (y[:, 1] <= lam)
        for tile, mask in ((Tile.Y1, in1), (Tile.Y2, in2), (Tile.Y3, in3), (Tile.Y4, in4)):
            if np.any(mask):
                out[mask] += loc[mask] @ grads[tile].T + offs[tile]
        return out[0] if single else out

    def gradient_at(self, x):
        from .geometry import tile_at

        _, tile = tile_at(self.partition, np.asarray(x, dtype=float), self.eps)
        return self.tile_gradients[tile]

    def deformed_tile(self, k, tile):
        """Image polygon (4 corners) of the tile in cell k."""
        from .geometry import LatticeIndex

        rect = LatticeIndex(tuple(k), self.eps).tile_rect(self.partition, tile)
        return self.evaluate(rect.corners())


def rotating_squares_map(S, R, partition, eps, translation=(0.0, 0.0)):
    """The mechanism deformation generated by two rotations.

    Any pair is admitted, including degenerate soft tiles with vanishing
    determinant; orientation and injectivity are checked separately.
    """
    return PiecewiseAffineMap(partition, float(eps), S, R, np.asarray(translation, float))


def periodic_limit_gradient(m):
    """Area-weighted average of the tile gradients over one cell.

    Equals lam*S + (1-lam)*R, the gradient of the weak limit of the
    oscillating mechanism maps.
    """
    tiles = m.partition.tiles
    G = np.zeros((2, 2))
    for tile, rect in tiles.items():
        G += rect.area * m.tile_gradients[tile]
    return G


# ---------------------------------------------------------------------------
# reflection branches

def _branch_parts(R, S, mu, sign):
    if not (0.0 < mu <= 1.0):
        raise KinematicsError(f"side ratio must lie in (0,1], got {mu}")
    d = float(S[:, 0] @ R[:, 1])  # Se1 . Re2
    den = 1.0 + mu * mu + sign * 2.0 * mu * d
    if abs(den) < 1e-14:
        raise BranchDegenerateError(
            f"reflection branch degenerate: 1+mu^2{'+' if sign > 0 else '-'}2*mu*(Se1.Re2)=0"
        )
    return d, den


def reflection_branch_F(R, S, mu, sign=+1):
    """F_sign(R,S,mu): rotation acting on the square across one diagonal.

    Reduces to sign*R^perp at mu=1 (away from the degenerate scalar
    products Se1.Re2 = -sign).
    """
    R = np.asarray(R, float)
    S = np.asarray(S, float)
    d, den = _branch_parts(R, S, mu, sign)
    return (sign * 2.0 * mu + 2.0 * mu * mu * d) / den * perp_mat(R) + (
        1.0 - mu * mu
    ) / den * S


def reflection_branch_G(R, S, mu, sign=+1):
    """G_sign(R,S,mu): the companion rotation; sign*S^perp at mu=1."""
    R = np.asarray(R, float)
    S = np.asarray(S, float)
    d, den = _branch_parts(R, S, mu, -sign)  # G_sign carries the opposite sign in its denominator
    return (sign * 2.0 * mu - 2.0 * d) / den * perp_mat(S) - (1.0 - mu * mu) / den * R


# ---------------------------------------------------------------------------
# soft-tile boundary classification

class BoundaryCase(Enum):
    PARALLELOGRAM = "rhombus_or_parallelogram"
    LINE_FULL = "line_full"
    HOOK = "hook_or_reflected"
    LINE_SHORT = "line_short"


@dataclass(frozen=True)
class BoundaryClass:
    case: BoundaryCase
    R: np.ndarray
    S: np.ndarray
    branch: int  # +1 for the (F+,G-) coupling, -1 for (F-,G+), 0 otherwise


def _apply(motion, x):
    Q, b = motion
    return np.asarray(Q) @ np.asarray(x, float) + np.asarray(b, float)


def classify_soft_boundary(corner_motions, mu, tol=TRACE_TOL):
    """Classify the image of a soft-tile boundary under four rigid motions.

    ``corner_motions`` are the (Q, b) pairs acting on the edges of the
    normalized tile (0,1) x (0,mu), numbered clockwise from the lower-left
    corner: left, top, right, bottom.  The image is a parallelogram, a full
    line, a folded ('hook'/reflected) configuration, or a short line; the two
    generating rotations and the reflection branch are recovered.

    Orientation-preserving fields only ever produce the first two cases.
    """
    if not (0.0 < mu <= 1.0):
        raise KinematicsError(f"side ratio must lie in (0,1], got {mu}")
    if len(corner_motions) != 4:
        raise KinematicsError("need exactly four edge motions")
    (R1, b1), (R2, b2), (R3, b3), (R4, b4) = [
        (np.asarray(Q, float), np.asarray(b, float)) for Q, b in corner_motions
    ]
    x1, x2, x3, x4 = (
        np.array([0.0, 0.0]),
        np.array([0.0, mu]),
        np.array([1.0, mu]),
        np.array([1.0, 0.0]),
    )
    # trace continuity at shared vertices
    for (ma, mb, xv) in (
        ((R1, b1), (R2, b2), x2),
        ((R2, b2), (R3, b3), x3),
        ((R3, b3), (R4, b4), x4),
        ((R4, b4), (R1, b1), x1),
    ):
        if np.linalg.norm(_apply(ma, xv) - _apply(mb, xv)) > tol:
            raise InvalidTraceError(
                f"edge motions disagree at vertex {xv} beyond {tol:g}"
            )

    def close(A, B):
        return frob(np.asarray(A) - np.asarray(B)) <= 10 * tol

    # straight cases: opposite edges share their rotations
    if close(R1, R3) and close(R2, R4):
        S, R = R2, R1
        sp = float(S[:, 0] @ R[:, 0])
        case = BoundaryCase.LINE_FULL if abs(sp) <= 10 * tol else BoundaryCase.PARALLELOGRAM
        return BoundaryClass(case, R, S, 0)

    A = _apply((R1, b1), x1)
    C = _apply((R3, b3), x3)
    B = _apply((R2, b2), x2)
    D = _apply((R4, b4), x4)

    def folded_case(R, S, branch):
        # both corner pairs coincide only when the two arms fold onto each other
        both = (
            np.linalg.norm(A - C) <= 10 * tol and np.linalg.norm(B - D) <= 10 * tol
        )
        if mu == 1.0 and both:
            return BoundaryClass(BoundaryCase.LINE_SHORT, R, S, branch)
        return BoundaryClass(BoundaryCase.HOOK, R, S, branch)

    if mu == 1.0:
        if close(R4 @ np.array([1.0, 0.0]), R1 @ np.array([0.0, 1.0])) and close(
            R3 @ np.array([0.0, 1.0]), R2 @ np.array([1.0, 0.0])
        ):
            return folded_case(R1, R2, +1)
        if close(R2 @ np.array([1.0, 0.0]), -(R1 @ np.array([0.0, 1.0]))) and close(
            R3 @ np.array([0.0, 1.0]), -(R4 @ np.array([1.0, 0.0]))
        ):
            return folded_case(R1, R4, -1)
    else:
        Fp = reflection_branch_F(R1, R2, mu, +1)
        Gm = reflection_branch_G(R1, R2, mu, -1)
        if close(R4[:, 0], Fp[:, 0]) and close(R3[:, 1], Gm[:, 1]):
            return folded_case(R1, R2, +1)
        Fm = reflection_branch_F(R1, R4, mu, -1)
        Gp = reflection_branch_G(R1, R4, mu, +1)
        if close(R2[:, 0], Fm[:, 0]) and close(R3[:, 1], Gp[:, 1]):
            return folded_case(R1, R4, -1)
    raise InvalidTraceError("edge motions fit no admissible boundary class")


# ---------------------------------------------------------------------------
# orientation and non-interpenetration

def check_orientation(m):
    """True iff all four tile gradients have positive determinant.

    For a mechanism map this reduces to Se1 . Re1 > 0 (the soft determinants
    both equal that scalar product).
    """
    return all(det2(G) > 0.0 for G in m.tile_gradients.values())


@dataclass(frozen=True)
class CiarletNecasResult:
    passed: bool
    deficit: float
    integral_abs_det: float
    image_area: float
    mc_image_area: float | None


def _deformed_tile_polygons(m, domain):
    """Shapely polygons of all deformed tiles clipped to the domain."""
    from shapely.geometry import Polygon

    from .geometry import LatticeIndex, lattice_cells

    sel = lattice_cells(domain, m.eps)
    polys = []
    abs_det = 0.0
    grads = m.tile_gradients
    rects = domain if isinstance(domain, list) else [domain]
    for k in sel.cells:
        idx = LatticeIndex(k, m.eps)
        for tile in Tile:
            trect = idx.tile_rect(m.partition, tile)
            for dr in rects:
                clipped = trect.intersect(dr)
                if clipped is None:
                    continue
                img = m.evaluate(clipped.corners())
                poly = Polygon(img)
                if poly.area > 0:
                    polys.append(poly)
                abs_det += abs(det2(grads[tile])) * clipped.area
    return polys, abs_det


def check_ciarlet_necas(m, domain, sample_density=0.0, rng=None, tol=1e-9):
    """Non-interpenetration check: integral of |det grad| vs image area.

    Decided by exact polygon geometry (deformed tiles are parallelograms;
    their union is computed exactly up to floating point).  A positive
    deficit means the map covers part of its image more than once.  With
    ``sample_density`` > 0 a Monte-Carlo estimate of the image area is
    recorded as a cross-check.
    """
    from shapely import contains_xy
    from shapely.ops import unary_union

    polys, abs_det = _deformed_tile_polygons(m, domain)
    union = unary_union(polys)
    image_area = union.area
    deficit = abs_det - image_area
    mc_area = None
    if sample_density > 0:
        rng = np.random.default_rng(rng)
        minx, miny, maxx, maxy = union.bounds
        box_area = (maxx - minx) * (maxy - miny)
        n = max(64, int(sample_density * box_area))
        pts = rng.uniform((minx, miny), (maxx, maxy), size=(n, 2))
        inside = contains_xy(union, pts[:, 0], pts[:, 1])
        mc_area = box_area * float(np.mean(inside))
    scale = max(abs_det, 1.0)
    return CiarletNecasResult(
        passed=bool(deficit <= tol * scale),
        deficit=float(max(deficit, 0.0)),
        integral_abs_det=float(abs_det),
        image_area=float(image_area),
        mc_image_area=mc_area,
    )


# ---------------------------------------------------------------------------
# microcrack construction (sub-quadratic regime)

@dataclass(frozen=True)
class MicrocrackMap:
    """Identity-plus-shift on every stiff square: v(x) = x + (F-Id)k on cell k.

    The stiff squares translate rigidly, tearing open at the hinges; the map
    is not single-valued at crack points, and evaluation resolves them by the
    half-open tile convention.  Soft tiles carry an explicit piecewise-affine
    fan fill matching the stiff traces on the long edges (it jumps across the
    interior segments that emanate from torn corners, which is exactly the
    crack set).  The mean gradient over one period equals F regardless of the
    fill; it is computed from the boundary traces alone.
    """

    F: np.ndarray
    partition: CellPartition

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))

    def cell_shift(self, k):
        return (self.F - np.eye(2)) @ np.asarray(k, dtype=float)

    def jump(self, k_from, k_to):
        """Crack opening between the stiff squares of two cells."""
        return self.cell_shift(k_to) - self.cell_shift(k_from)

    def _soft_traces(self, tile, k):
        """Affine trace maps (as shift vectors over identity) on the four
        edges of a soft tile of cell k, keyed bottom/right/top/left."""
        shift = self.cell_shift(k)
        d1 = (self.F - np.eye(2)) @ np.array([1.0, 0.0])
        d2 = (self.F - np.eye(2)) @ np.array([0.0, 1.0])
        if tile is Tile.Y2:
            return {"bottom": shift, "right": shift, "top": shift + d2, "left": shift - d1}
        return {"bottom": shift - d2, "right": shift + d1, "top": shift, "left": shift}

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x).copy()
        out = np.empty_like(pts)
        for i, p in enumerate(pts):
            k = cell_index_of(p, 1.0)
            y = p - np.array(k)
            tile = self.partition.tile_of(y)
            if tile.stiff:
                out[i] = p + self.cell_shift(k)
                continue
            rect = self.partition.tiles[tile].shifted(np.array(k, float))
            traces = self._soft_traces(tile, k)
            out[i] = _fan_fill(p, rect, traces)
        return out[0] if single else out

    def mean_gradient(self):
        """Mean of the gradient over one period, via boundary line integrals.

        Equals area(stiff)*Id plus the divergence-theorem contribution of the
        stiff traces along the soft-tile boundaries; the quadrature (2-point
        Gauss per edge) is exact for the affine traces.
        """
        lam = self.partition.lam
        total = self.partition.area_stiff * np.eye(2)
        for tile in (Tile.Y2, Tile.Y4):
            rect = self.partition.tiles[tile]
            traces = self._soft_traces(tile, (0, 0))
            total += _boundary_gradient_integral(rect, traces)
        return total


def _boundary_gradient_integral(rect, traces):
    """Integral of grad v over a tile from its boundary traces v = x + shift."""
    edges = {
        "bottom": (np.array([rect.x0, rect.y0]), np.array([rect.x1, rect.y0]), np.array([0.0, -1.0])),
        "right": (np.array([rect.x1, rect.y0]), np.array([rect.x1, rect.y1]), np.array([1.0, 0.0])),
        "top": (np.array([rect.x1, rect.y1]), np.array([rect.x0, rect.y1]), np.array([0.0, 1.0])),
        "left": (np.array([rect.x0, rect.y1]), np.array([rect.x0, rect.y0]), np.array([-1.0, 0.0])),
    }
    g = 0.5 * (1.0 - 1.0 / np.sqrt(3.0)), 0.5 * (1.0 + 1.0 / np.sqrt(3.0))
    total = np.zeros((2, 2))
    for name, (a, b, nu) in edges.items():
        shift = traces[name]
        length = np.linalg.norm(b - a)
        for t in g:
            p = (1.0 - t) * a + t * b
            v = p + shift
            total += 0.5 * length * np.outer(v, nu)
    return total


def _fan_fill(p, rect, traces):
    """Piecewise-affine fill of a soft tile from its four edge traces.

    Triangulates from the tile center; within the triangle over each edge the
    value interpolates affinely between the edge trace and the average of the
    four traces at the center.  Continuous wherever adjacent traces agree at
    a corner; torn corners leave radial jump segments (the cracks).
    """
    c = rect.center
    shifts = traces
    m = c + 0.25 * (shifts["bottom"] + shifts["right"] + shifts["top"] + shifts["left"])
    # which edge triangle holds p: compare slopes against the two diagonals
    dx = (p[0] - c[0]) / rect.width
    dy = (p[1] - c[1]) / rect.height
    if abs(dy) <= -dx:
        name, t = "left", -2.0 * dx
    elif abs(dy) <= dx:
        name, t = "right", 2.0 * dx
    elif dy > 0:
        name, t = "top", 2.0 * dy
    else:
        name, t = "bottom", -2.0 * dy
    trace_val = p + shifts[name]
    trace_at_center = c + shifts[name]
    return trace_val + (1.0 - t) * (m - trace_at_center)


def microcrack_map(F, partition):
    """Periodic discontinuous map with prescribed mean gradient F.

    The stiff squares keep gradient Id and translate cell-by-cell; the mean
    over one period is exactly F by the divergence-theorem composition.
    """
    return MicrocrackMap(np.asarray(F, dtype=float), partition)
