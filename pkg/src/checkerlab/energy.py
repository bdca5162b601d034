"""Energy densities and the homogenized / cell-formula densities.

The default soft density W(F) = |F|^2 + det F + 1/det F - 4 is polyconvex,
vanishes on rotations, and blows up under compression to zero volume; being
polyconvex it equals its own quasiconvex envelope, which keeps the
homogenized density computable in closed form.  The stiff density saturates
the admissible lower bound eps^(-beta)/c * dist^p(F, SO(2)) and both phases
return +inf at non-positive determinants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .effective import decompose_in_K
from .fem import Grid, assemble, cell_breakpoints
from .geometry import build_partition
from .kinematics import columns, rotating_squares_map
from .optimize import lbfgs


def default_theta(d):
    """Convex volumetric penalty, zero at d = 1."""
    d = np.asarray(d, dtype=float)
    return d + 1.0 / d - 2.0


def _cofactor(F):
    cof = np.empty_like(F)
    cof[..., 0, 0] = F[..., 1, 1]
    cof[..., 0, 1] = -F[..., 1, 0]
    cof[..., 1, 0] = -F[..., 0, 1]
    cof[..., 1, 1] = F[..., 0, 0]
    return cof


def _det(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def soft_default_value(F):
    """W(F) = |F|^2 + det F + 1/det F - 4, +inf at det <= 0."""
    F = np.asarray(F, dtype=float)
    det = _det(F)
    norm2 = np.sum(F * F, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(det > 0.0, norm2 + det + 1.0 / det - 4.0, np.inf)
    return val


def soft_default_value_stress(F):
    F = np.asarray(F, dtype=float)
    det = _det(F)
    norm2 = np.sum(F * F, axis=(-2, -1))
    bad = det <= 0.0
    safe = np.where(bad, 1.0, det)
    val = np.where(bad, np.inf, norm2 + det + 1.0 / safe - 4.0)
    P = 2.0 * F + (1.0 - 1.0 / safe**2)[..., None, None] * _cofactor(F)
    return val, P


@dataclass(frozen=True)
class Material:
    """Phase densities plus the solver-facing knobs.

    ``rigid`` switches the stiff phase to the idealized zero-or-infinity
    density (realized in the cell formula by pinning the stiff nodes to exact
    rotations rather than by evaluating it).  ``stiff_eps`` overrides the
    length scale used in the stiff prefactor, for unit-cell problems.
    """

    p: float = 2.0
    beta: float = 4.0
    c: float = 1.0
    variant: str = "default"
    rigid: bool = False
    delta_det: float = 1e-8
    stiff_eps: float | None = None
    soft_fn: object = None
    soft_stress_fn: object = None
    qc_fn: object = None
    qc_exact: bool = True
    theta: object = default_theta
    rigid_tol: float = 1e-7

    def soft_value(self, F):
        if self.variant == "default":
            return soft_default_value(F)
        return self.soft_fn(F)

    def soft_value_stress(self, F):
        if self.variant == "default":
            return soft_default_value_stress(F)
        return self.soft_stress_fn(F)

    def qc_soft(self, F):
        """Quasiconvex envelope of the soft density (exact for the default)."""
        if self.variant == "default":
            return soft_default_value(F)
        if self.qc_fn is not None:
            return self.qc_fn(F)
        return self.soft_value(F)

    def stiff_value(self, F, eps):
        from .rigidity import dist_so2_squared

        eps = self.stiff_eps if self.stiff_eps is not None else eps
        F = np.asarray(F, dtype=float)
        det = _det(F)
        d2 = np.maximum(dist_so2_squared(F), 0.0)
        if self.rigid:
            ok = d2 <= self.rigid_tol**2
            return np.where(ok, 0.0, np.inf)
        scale = eps ** (-self.beta) / self.c
        val = np.where(det > 0.0, scale * d2 ** (self.p / 2.0), np.inf)
        return val

    def stiff_value_stress(self, F, eps):
        from .rigidity import dist_so2_squared, dist_so2_squared_stress

        eps = self.stiff_eps if self.stiff_eps is not None else eps
        F = np.asarray(F, dtype=float)
        det = _det(F)
        if self.rigid:
            d2 = np.maximum(dist_so2_squared(F), 0.0)
            ok = d2 <= self.rigid_tol**2
            return np.where(ok, 0.0, np.inf), np.zeros_like(F)

        d2, dd2 = dist_so2_squared_stress(F)
        d2 = np.maximum(d2, 0.0)
        scale = eps ** (-self.beta) / self.c
        val = np.where(det > 0.0, scale * d2 ** (self.p / 2.0), np.inf)
        if self.p == 2.0:
            P = scale * dd2
        else:
            fac = scale * (self.p / 2.0) * d2 ** (self.p / 2.0 - 1.0)
            P = fac[..., None, None] * dd2
        return val, P


def eval_density(material, partition, y, F, eps):
    """The two-phase density at unit-cell point y (periodic half-open lookup)."""
    from .geometry import tile_at

    if eps <= 0:
        raise ValueError("length scale must be positive")
    _, tile = tile_at(partition, np.asarray(y, dtype=float), 1.0)
    F = np.asarray(F, dtype=float)
    if tile.stiff:
        return float(material.stiff_value(F, eps))
    return float(material.soft_value(F))


def eval_W_hom(F, lam, qc_density=None, material=None):
    """Homogenized density on the attainable set.

    Half the soft area times the best decomposition's mixed-column energies;
    +inf on the maximal-contraction circle for densities blowing up at zero
    determinant, and a membership error outside the set.
    """
    if qc_density is None:
        mat = material if material is not None else Material()
        qc_density = mat.qc_soft
    F = np.asarray(F, dtype=float)
    pairs = decompose_in_K(F, lam)
    area_soft = 2.0 * lam * (1.0 - lam)
    best = math.inf
    for S, R in pairs:
        v = float(qc_density(columns(S, R))) + float(qc_density(columns(R, S)))
        best = min(best, 0.5 * area_soft * v)
    return best


# ---------------------------------------------------------------------------
# lamination upper bound for quasiconvex envelopes

def _as_batch(fn):
    def batched(Fs):
        Fs = np.asarray(Fs, dtype=float)
        if Fs.ndim == 2:
            return np.atleast_1d(np.asarray(fn(Fs), dtype=float))
        out = np.asarray(fn(Fs), dtype=float)
        if out.shape != Fs.shape[:-2]:
            out = np.array([fn(G) for G in Fs.reshape(-1, 2, 2)], dtype=float)
            out = out.reshape(Fs.shape[:-2])
        return out

    return batched


def _rank_one_grid(grid):
    g = int(grid)
    mus = np.linspace(0.0, 1.0, g + 1)[1:-1]
    amps = np.arange(1, g + 1) * (2.0 / g)
    alphas = np.arange(g) * (2.0 * np.pi / g)
    betas = np.arange(g) * (np.pi / g)
    a = np.stack([np.cos(alphas), np.sin(alphas)], axis=-1)
    b = np.stack([np.cos(betas), np.sin(betas)], axis=-1)
    X = amps[:, None, None, None, None] * (a[None, :, None, :, None] * b[None, None, :, None, :])
    X = X.reshape(-1, 2, 2)
    return mus, X


def laminate_qc(density, F, depth=1, grid=8):
    """Iterated rank-one lamination upper bound for the quasiconvex envelope.

    Depth 0 returns the raw density; each level optimizes over discretized
    rank-one splits F = mu*A + (1-mu)*B with B - A = a (x) b, never exceeding
    the previous level.  For rank-one convex densities (in particular the
    polyconvex default) every depth returns the density itself.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if grid < 2:
        raise ValueError("grid must be at least 2")
    f = _as_batch(density)
    mus, X = _rank_one_grid(grid)
    F = np.asarray(F, dtype=float)

    def level(d, Fs):
        if d == 0:
            return f(Fs)
        if d == 1:
            vals = f(Fs)
            A = Fs[:, None] - (1.0 - mus)[None, :, None, None, None] * X[None, None]
            B = Fs[:, None] + mus[None, :, None, None, None] * X[None, None]
            vA = f(A.reshape(-1, 2, 2)).reshape(len(Fs), len(mus), len(X))
            vB = f(B.reshape(-1, 2, 2)).reshape(len(Fs), len(mus), len(X))
            with np.errstate(invalid="ignore"):
                split = mus[None, :, None] * vA + (1.0 - mus)[None, :, None] * vB
            split = np.where(np.isnan(split), np.inf, split)
            return np.minimum(vals, split.min(axis=(1, 2)))
        out = level(d - 1, Fs)
        for i, F0 in enumerate(Fs):
            A = F0[None] - (1.0 - mus)[:, None, None, None] * X[None]
            B = F0[None] + mus[:, None, None, None] * X[None]
            vA = level(d - 1, A.reshape(-1, 2, 2)).reshape(len(mus), len(X))
            vB = level(d - 1, B.reshape(-1, 2, 2)).reshape(len(mus), len(X))
            with np.errstate(invalid="ignore"):
                split = mus[:, None] * vA + (1.0 - mus)[:, None] * vB
            split = np.where(np.isnan(split), np.inf, split)
            out[i] = min(out[i], float(split.min()))
        return out

    return float(level(depth, F[None])[0])


# ---------------------------------------------------------------------------
# discrete single-cell formula

@dataclass(frozen=True)
class CellFormulaResult:
    value: float
    converged: bool
    iterations: int
    residual: float
    n: int
    pair_index: int
    message: str


def _periodic_maps(grid):
    """Full-node -> unique-node index map for the periodic unit cell."""
    nx, ny = grid.nx, grid.ny
    i = np.arange(nx + 1) % nx
    j = np.arange(ny + 1) % ny
    I, J = np.meshgrid(i, j, indexing="xy")
    return (J * nx + I).ravel()


def _stiff_closure_mask(coords, lam):
    """Unique nodes pinned by the rigid stiff phase (periodic closures)."""
    x, y = coords[:, 0], coords[:, 1]

    def in_closures(px, py):
        return ((px <= lam) & (py <= lam)) | ((px >= lam) & (py >= lam))

    pinned = in_closures(x, y)
    pinned |= (x == 0.0) & in_closures(np.ones_like(x), y)
    pinned |= (y == 0.0) & in_closures(x, np.ones_like(y))
    pinned |= (x == 0.0) & (y == 0.0)
    return pinned


def solve_cell_formula(F, lam, material=None, mesh_n=16, tol=1e-10, maxiter=2000):
    """Discrete single-cell infimum of the two-phase energy at mean gradient F.

    Minimizes the energy of u(y) = F y + psi(y) over periodic psi on a
    tile-aligned n x n grid.  With the rigid stiff phase the stiff nodes are
    pinned to the two-rotation mechanism for each decomposition of F and only
    soft-interior nodes move; the reported value is the better decomposition.
    With an elastic stiff phase all nodes are free (mean pinned to zero).
    """
    if mesh_n < 4:
        raise ValueError("mesh_n must be at least 4")
    material = material if material is not None else Material(rigid=True)
    F = np.asarray(F, dtype=float)
    partition = build_partition(lam)
    r = max(2, mesh_n // 2)
    bks = cell_breakpoints(lam, r)
    grid = Grid(bks.copy(), bks.copy(), partition, 1.0)
    wrap = _periodic_maps(grid)
    nu = grid.nx * grid.ny
    ii = np.arange(nu)
    unique_coords = np.column_stack([grid.xs[ii % grid.nx], grid.ys[ii // grid.nx]])

    if material.rigid:
        pairs = decompose_in_K(F, lam)
        pinned = _stiff_closure_mask(unique_coords, lam)
    else:
        pairs = [None]
        pinned = np.zeros(nu, dtype=bool)
    free = ~pinned
    base = grid.nodes @ F.T

    best = None
    for pair_index, pair in enumerate(pairs):
        if pair is not None:
            S, R = pair
            v = rotating_squares_map(S, R, partition, 1.0)
            psi0_full = v.evaluate(grid.nodes) - base
            psi0 = np.zeros((nu, 2))
            psi0[wrap] = psi0_full
        else:
            psi0 = np.zeros((nu, 2))

        def objective(x):
            psi = psi0.copy()
            psi[free] = x.reshape(-1, 2)
            U = base + psi[wrap]
            val, force = assemble(grid, U, material)
            if not np.isfinite(val):
                return np.inf, None
            gpsi = np.zeros((nu, 2))
            np.add.at(gpsi, wrap, force)
            return val, gpsi[free].ravel()

        def project(x):
            if material.rigid:
                return x
            psi = x.reshape(-1, 2)
            return (psi - psi.mean(axis=0)).ravel()

        res = lbfgs(
            objective,
            psi0[free].ravel(),
            tol=tol,
            maxiter=maxiter,
            project=None if material.rigid else project,
        )
        cand = CellFormulaResult(
            value=res.value,
            converged=res.converged,
            iterations=res.iterations,
            residual=res.grad_norm,
            n=2 * r,
            pair_index=pair_index,
            message=res.message,
        )
        if best is None or cand.value < best.value:
            best = cand
    return best
