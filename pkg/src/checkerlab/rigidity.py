"""Quantitative rotation fitting on squares and cross structures.

Nearest-rotation projection, per-square and joint cross fits (the two squares
on each pair of opposite edges of a soft rectangle share one rotation),
the approximate non-interpenetration transfer bound, an empirical scaling
harness for the fit error against the distance-to-rotations defect, and the
checkerboard Poincare quotient.

Fits over disjoint crosses are independent; every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import Rect, Tile, tile_at


class RigidityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# nearest rotation

def dist_so2_squared(F):
    """Squared Frobenius distance to SO(2), valid for any determinant sign.

    dist^2 = |F|^2 + 2 - 2*sqrt(|F|^2 + 2 det F); the square root argument is
    (sigma1 + sign(det)*sigma2)^2 >= 0.
    """
    F = np.asarray(F, dtype=float)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    norm2 = np.sum(F * F, axis=(-2, -1))
    return norm2 + 2.0 - 2.0 * np.sqrt(np.maximum(norm2 + 2.0 * det, 0.0))


def dist_so2_squared_stress(F):
    """dist^2 and its derivative with respect to F."""
    F = np.asarray(F, dtype=float)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    norm2 = np.sum(F * F, axis=(-2, -1))
    s = np.sqrt(np.maximum(norm2 + 2.0 * det, 1e-300))
    cof = np.empty_like(F)
    cof[..., 0, 0] = F[..., 1, 1]
    cof[..., 0, 1] = -F[..., 1, 0]
    cof[..., 1, 0] = -F[..., 0, 1]
    cof[..., 1, 1] = F[..., 0, 0]
    d2 = norm2 + 2.0 - 2.0 * s
    dd2 = 2.0 * F - (2.0 * F + 2.0 * cof) / s[..., None, None]
    return d2, dd2


@dataclass(frozen=True)
class NearestRotation:
    rotation: np.ndarray
    distance: float
    degenerate: bool

    def __iter__(self):
        return iter((self.rotation, self.distance))


def nearest_rotation(F):
    """Argmin over SO(2) of the Frobenius distance, via the planar polar form.

    For F = 0 every rotation is admissible; the identity is returned with
    distance sqrt(2) and the degeneracy flagged.
    """
    F = np.asarray(F, dtype=float)
    a = F[0, 0] + F[1, 1]
    b = F[1, 0] - F[0, 1]
    r = math.hypot(a, b)
    if r < 1e-14:
        return NearestRotation(np.eye(2), math.sqrt(2.0), True)
    Q = np.array([[a, -b], [b, a]]) / r
    return NearestRotation(Q, float(np.linalg.norm(F - Q)), False)


# ---------------------------------------------------------------------------
# sampled fields

@dataclass(frozen=True)
class SampledField:
    """Gradient (and optionally value) samples with quadrature weights.

    ``stiff`` tags come from the periodic tile lookup at the sample points;
    gradients live at the same points.
    """

    points: np.ndarray
    weights: np.ndarray
    grads: np.ndarray
    stiff: np.ndarray
    p: float
    values: np.ndarray | None = None

    def restrict(self, rects, stiff_only=False):
        mask = np.zeros(len(self.points), dtype=bool)
        rects = rects if isinstance(rects, (list, tuple)) else [rects]
        for r in rects:
            mask |= (
                (self.points[:, 0] > r.x0)
                & (self.points[:, 0] <= r.x1)
                & (self.points[:, 1] > r.y0)
                & (self.points[:, 1] <= r.y1)
            )
        if stiff_only:
            mask &= self.stiff
        return mask

    def norm_lp_grad_minus(self, Q, mask):
        dev = self.grads[mask] - np.asarray(Q)[None]
        return float(
            np.sum(self.weights[mask] * np.sum(dev * dev, axis=(1, 2)) ** (self.p / 2.0))
            ** (1.0 / self.p)
        )

    def dist_defect(self, mask):
        d2 = np.maximum(dist_so2_squared(self.grads[mask]), 0.0)
        return float(
            np.sum(self.weights[mask] * d2 ** (self.p / 2.0)) ** (1.0 / self.p)
        )

    def norm_lp_values(self, mask):
        if self.values is None:
            raise RigidityError("field carries no values")
        v = self.values[mask]
        return float(
            np.sum(self.weights[mask] * np.sum(v * v, axis=1) ** (self.p / 2.0))
            ** (1.0 / self.p)
        )


def sample_field(rects, n, grad_fn, value_fn=None, partition=None, eps=1.0, p=2.0):
    """Midpoint-rule samples of a field on a list of rectangles."""
    rects = rects if isinstance(rects, (list, tuple)) else [rects]
    pts, wts = [], []
    for r in rects:
        xs = r.x0 + (np.arange(n) + 0.5) * r.width / n
        ys = r.y0 + (np.arange(n) + 0.5) * r.height / n
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        pts.append(np.column_stack([X.ravel(), Y.ravel()]))
        wts.append(np.full(n * n, r.area / (n * n)))
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    grads = np.asarray(grad_fn(pts), dtype=float)
    values = None if value_fn is None else np.asarray(value_fn(pts), dtype=float)
    if partition is not None:
        stiff = np.array(
            [tile_at(partition, q, eps)[1].stiff for q in pts], dtype=bool
        )
    else:
        stiff = np.ones(len(pts), dtype=bool)
    return SampledField(pts, wts, grads, stiff, float(p), values)


# ---------------------------------------------------------------------------
# rotation fits

def _fit_rotation_masked(field, mask):
    if not mask.any():
        raise RigidityError("empty fit region")
    if field.p == 2.0:
        Gbar = np.einsum("e,eab->ab", field.weights[mask], field.grads[mask])
        Q = nearest_rotation(Gbar).rotation
        return Q, field.norm_lp_grad_minus(Q, mask)
    Gbar = np.einsum("e,eab->ab", field.weights[mask], field.grads[mask])
    theta0 = math.atan2(Gbar[1, 0] - Gbar[0, 1], Gbar[0, 0] + Gbar[1, 1])

    def obj(theta):
        c, s = math.cos(theta), math.sin(theta)
        Q = np.array([[c, -s], [s, c]])
        return field.norm_lp_grad_minus(Q, mask) ** field.p

    res = minimize_scalar(
        obj, bounds=(theta0 - 0.5 * math.pi, theta0 + 0.5 * math.pi), method="bounded",
        options={"xatol": 1e-12},
    )
    c, s = math.cos(res.x), math.sin(res.x)
    Q = np.array([[c, -s], [s, c]])
    return Q, field.norm_lp_grad_minus(Q, mask)


def fit_square_rotation(field, square):
    """Best rotation in the discrete L^p sense on one square."""
    mask = field.restrict(square)
    return _fit_rotation_masked(field, mask)


@dataclass(frozen=True)
class CrossFit:
    S: np.ndarray
    R: np.ndarray
    error_p: float
    scalar_product: float
    delta: float
    delta_threshold: float
    guaranteed: bool


def fit_cross_rotations(field, cross, p=None, delta0=0.1):
    """Joint two-rotation fit on a cross: one rotation per opposite pair.

    S is fitted on E1 and E3 together, R on E2 and E4; the defect delta is
    the L^p distance of the gradient to rotations over all four squares.
    Below the scaled threshold delta0 * rho^(2/p) the joint fit is backed by
    the quantitative rigidity estimate; above it the fit is still returned,
    flagged as not guaranteed.
    """
    if p is not None and p != field.p:
        field = SampledField(
            field.points, field.weights, field.grads, field.stiff, float(p), field.values
        )
    m13 = field.restrict([cross.E1, cross.E3])
    m24 = field.restrict([cross.E2, cross.E4])
    S, e13 = _fit_rotation_masked(field, m13)
    R, e24 = _fit_rotation_masked(field, m24)
    delta = field.dist_defect(m13 | m24)
    threshold = delta0 * cross.rho ** (2.0 / field.p)
    return CrossFit(
        S=S,
        R=R,
        error_p=e13 + e24,
        scalar_product=float(S[:, 0] @ R[:, 0]),
        delta=delta,
        delta_threshold=threshold,
        guaranteed=bool(delta < threshold),
    )


# ---------------------------------------------------------------------------
# approximate non-interpenetration transfer

@dataclass(frozen=True)
class ApproxCiarletResult:
    passed: bool
    slack: float
    integral_abs_det: float
    image_area: float


def approximate_ciarlet_check(v_pieces, h, C=1.0, u_samples=None):
    """Non-interpenetration bound transferred from a W^{1,p}-close deformation.

    ``v_pieces`` is a piecewise rigid map given as (rect, Q, b) triples; the
    integral of |det grad v| and the exact image area are polygon geometry,
    and the admissible slack is C*(1+|grad v|_{L2})*h.  When sample values of
    the nearby deformation are supplied they are checked against h as a
    plausibility guard.
    """
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    if not (0.0 <= h < 1.0):
        raise RigidityError(f"closeness parameter must lie in [0,1), got {h}")
    polys = []
    integral = 0.0
    grad_sq = 0.0
    for rect, Q, b in v_pieces:
        Q = np.asarray(Q, dtype=float)
        b = np.asarray(b, dtype=float)
        img = rect.corners() @ Q.T + b
        polys.append(Polygon(img))
        det = Q[0, 0] * Q[1, 1] - Q[0, 1] * Q[1, 0]
        integral += abs(det) * rect.area
        grad_sq += float(np.sum(Q * Q)) * rect.area
    image_area = unary_union(polys).area
    slack = C * (1.0 + math.sqrt(grad_sq)) * h
    if u_samples is not None:
        pts, vals = u_samples
        for rect, Q, b in v_pieces:
            inside = np.array([rect.contains(q) for q in pts])
            if inside.any():
                dev = vals[inside] - (pts[inside] @ np.asarray(Q).T + b)
                if np.max(np.linalg.norm(dev, axis=1)) > max(10 * C * h, 1e-12):
                    raise RigidityError("supplied samples are not h-close to v")
    passed = integral <= image_area + slack + 1e-12 * max(1.0, integral)
    return ApproxCiarletResult(bool(passed), float(slack), float(integral), float(image_area))


# ---------------------------------------------------------------------------
# empirical scaling harness

@dataclass(frozen=True)
class ScalingRow:
    level: float
    delta: float
    error_p: float
    scalar_product: float


@dataclass(frozen=True)
class ScalingReport:
    rows: tuple
    slope: float | None
    exact: bool

    def csv_rows(self):
        head = "level,delta,error_p,scalar_product,slope"
        slope = "" if self.slope is None else f"{self.slope:.12g}"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{r.level:.12g},{r.delta:.12g},{r.error_p:.12g},{r.scalar_product:.12g},{slope}"
            )
        return lines


def measure_rigidity_scaling(base, perturbation, levels, cross, n=12, p=2.0, partition=None):
    """Fit error against defect across perturbation levels, with log-log slope.

    The base field is the exact mechanism with rotations (S0, R0) on the
    cross squares; the perturbation is a gradient-valued callable scaled by
    each level.  All-zero errors report an exact fit instead of a slope.
    """
    if len(levels) < 3:
        raise RigidityError("need at least 3 levels")
    S0, R0 = base
    squares = cross.squares()

    def grads_for(t):
        def fn(pts):
            G = np.empty((len(pts), 2, 2))
            for i, q in enumerate(pts):
                if cross.E1.contains(q) or cross.E3.contains(q):
                    G[i] = S0
                else:
                    G[i] = R0
            return G + t * np.asarray(perturbation(pts), dtype=float)

        return fn

    rows = []
    for t in levels:
        field = sample_field(list(squares), n, grads_for(t), p=p)
        fit = fit_cross_rotations(field, cross)
        rows.append(ScalingRow(float(t), fit.delta, fit.error_p, fit.scalar_product))
    ok = [r for r in rows if r.delta > 0.0 and r.error_p > 0.0]
    if not ok:
        return ScalingReport(tuple(rows), None, True)
    if len({round(math.log(r.delta), 12) for r in ok}) < 2:
        raise RigidityError("degenerate regression: identical defects")
    xs = np.log([r.delta for r in ok])
    ys = np.log([r.error_p for r in ok])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return ScalingReport(tuple(rows), slope, False)


# ---------------------------------------------------------------------------
# checkerboard Poincare quotient

@dataclass(frozen=True)
class PoincareResult:
    quotient: float
    value_norm: float
    gradient_norm: float
    boundary_ratio: float
    preconditions_verified: bool
    infinite: bool


def poincare_quotient(field, inner, outer, eps, M=10.0, demean=True, mean_tol=1e-9):
    """Ratio |u|_{L^p(inner, stiff)} / |grad u|_{L^p(outer, stiff)}.

    The mean over the inner stiff samples is removed (set demean=False to
    require it zero up to mean_tol instead).  The boundary-control ratio
    |u|_outer <= M |u|_inner is verified and merely downgrades the result
    when violated.  Conventions: 0/0 -> 0, finite/0 -> flagged infinite.
    """
    mi = field.restrict(inner, stiff_only=True)
    mo = field.restrict(outer, stiff_only=True)
    if field.values is None:
        raise RigidityError("field carries no values")
    if not mi.any() or not mo.any():
        raise RigidityError("empty stiff intersection")
    w = field.weights[mi]
    mean = (w[:, None] * field.values[mi]).sum(axis=0) / w.sum()
    if demean:
        field = SampledField(
            field.points, field.weights, field.grads, field.stiff, field.p,
            field.values - mean[None],
        )
    elif np.linalg.norm(mean) > mean_tol:
        raise RigidityError(f"inner stiff mean {np.linalg.norm(mean):.3e} not zero")
    vi = field.norm_lp_values(mi)
    vo = field.norm_lp_values(mo)
    gnorm = float(
        np.sum(
            field.weights[mo]
            * np.sum(field.grads[mo] ** 2, axis=(1, 2)) ** (field.p / 2.0)
        )
        ** (1.0 / field.p)
    )
    ratio = vo / vi if vi > 0 else (0.0 if vo == 0.0 else math.inf)
    verified = bool(ratio <= M)
    if gnorm == 0.0:
        if vi == 0.0:
            return PoincareResult(0.0, vi, gnorm, ratio, verified, False)
        return PoincareResult(math.inf, vi, gnorm, ratio, verified, True)
    return PoincareResult(vi / gnorm, vi, gnorm, ratio, verified, False)
