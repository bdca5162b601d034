"""Desk-scale energy minimization on eps-checkerboard meshes.

Discretizes the two-phase energy with tile-aligned bilinear quads, minimizes
under affine boundary data (or the zero-mean constraint), and runs the
shrinking-cell experiments: contraction data relax toward the mechanism
microstructure at the homogenized energy, stretch data blow up with the
diverging stiff modulus.

Independent eps-runs may execute concurrently; a deformation is owned by a
single run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .effective import KMembershipError, decompose_in_K, k_membership
from .energy import Material
from .fem import Grid, assemble, cell_breakpoints, stiff_distance_integral
from .geometry import GeometryError, Rect, build_partition
from .kinematics import rotating_squares_map
from .optimize import lbfgs


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    grid: Grid
    domain: Rect
    eps: float
    resolution: int

    @property
    def partition(self):
        return self.grid.partition

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def n_elements(self):
        return self.grid.n_elems

    def stiff_element_count(self):
        return int(self.grid.stiff.sum())


def _axis_breakpoints(a, b, eps, lam, resolution):
    n_cells = round((b - a) / eps)
    if n_cells < 1 or abs(n_cells * eps - (b - a)) > 1e-9 * max(1.0, b - a):
        suggestion = (b - a) / max(1, round((b - a) / eps))
        raise SolverError(
            f"domain side {b - a} is not an integer multiple of eps={eps}; "
            f"nearest valid eps is {suggestion}"
        )
    base = cell_breakpoints(lam, resolution)
    parts = [a + eps * (k + base[1:]) for k in range(n_cells)]
    return np.concatenate([[a], *parts])


def build_mesh(domain, eps, resolution, lam):
    """Tile-aligned quad mesh of an axis-aligned domain.

    Domain side lengths must be integer multiples of eps; every element lies
    in exactly one tile and carries its stiff/soft tag.
    """
    if resolution < 2:
        raise SolverError("resolution must be at least 2 elements per tile edge")
    partition = build_partition(lam)
    xs = _axis_breakpoints(domain.x0, domain.x1, eps, lam, resolution)
    ys = _axis_breakpoints(domain.y0, domain.y1, eps, lam, resolution)
    grid = Grid(xs, ys, partition, float(eps))
    return Mesh(grid, domain, float(eps), int(resolution))


@dataclass(frozen=True)
class Constraint:
    kind: str  # "affine_boundary" | "mean_zero"
    F: np.ndarray | None = None


def affine_boundary(F):
    return Constraint("affine_boundary", np.asarray(F, dtype=float))


MEAN_ZERO = Constraint("mean_zero", None)


@dataclass
class DiscreteDeformation:
    mesh: Mesh
    U: np.ndarray
    constraint: Constraint

    def min_quad_det(self):
        return self.mesh.grid.min_det(self.U)


def assemble_energy(mesh, deformation, material):
    """Total discrete energy and its exact nodal gradient (+inf barrier)."""
    U = deformation.U if isinstance(deformation, DiscreteDeformation) else deformation
    return assemble(mesh.grid, U, material)


def init_affine(mesh, F, b=(0.0, 0.0)):
    return mesh.nodes @ np.asarray(F, dtype=float).T + np.asarray(b, dtype=float)


def _boundary_distance_weight(mesh):
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    d = np.minimum.reduce(
        [x - mesh.domain.x0, mesh.domain.x1 - x, y - mesh.domain.y0, mesh.domain.y1 - y]
    )
    w = np.clip(d / mesh.eps, 0.0, 1.0)
    return w * w * (3.0 - 2.0 * w)


def init_mechanism(mesh, F, material=None, pair_index=0):
    """Feasible start for contraction data: mechanism inside, affine rim.

    The rotating-squares interpolant agrees with the affine map at lattice
    vertices; blending its oscillation to zero across one boundary cell layer
    keeps the affine boundary exact.  The oscillation amplitude is halved
    until every quadrature determinant clears the orientation barrier.
    """
    material = material if material is not None else Material()
    F = np.asarray(F, dtype=float)
    pairs = decompose_in_K(F, mesh.partition.lam)
    S, R = pairs[min(pair_index, len(pairs) - 1)]
    v = rotating_squares_map(S, R, mesh.partition, mesh.eps)
    Ua = init_affine(mesh, F)
    osc = v.evaluate(mesh.nodes) - Ua
    w = _boundary_distance_weight(mesh)[:, None]
    amp = 1.0
    for _ in range(12):
        U = Ua + amp * w * osc
        if mesh.grid.min_det(U) > material.delta_det:
            return U
        amp *= 0.5
    return Ua


@dataclass
class MinimizeResult:
    deformation: DiscreteDeformation
    energy: float
    iterations: int
    grad_norm: float
    converged: bool
    message: str
    energy_trace: list
    min_det: float


def minimize(mesh, constraint, material, init=None, tol_factor=1e-8, maxiter=5000):
    """Quasi-Newton descent of the discrete energy under the constraint.

    Backtracking keeps every quadrature determinant above the orientation
    barrier; the zero-mean constraint is enforced by projection after each
    step.  Raises on an infeasible (infinite-energy) start.
    """
    grid = mesh.grid
    if init is None:
        if constraint.kind == "affine_boundary":
            member = k_membership(constraint.F, mesh.partition.lam)
            init = (
                init_mechanism(mesh, constraint.F, material)
                if member.in_K
                else init_affine(mesh, constraint.F)
            )
        else:
            init = mesh.nodes.copy()
    U0 = np.asarray(init, dtype=float).copy()

    if constraint.kind == "affine_boundary":
        pinned = grid.boundary_node_mask()
        U0[pinned] = mesh.nodes[pinned] @ constraint.F.T
    elif constraint.kind == "mean_zero":
        pinned = np.zeros(grid.n_nodes, dtype=bool)
        U0 -= U0.mean(axis=0)
    else:
        raise SolverError(f"unknown constraint kind {constraint.kind!r}")
    free = ~pinned

    e0, _ = assemble(grid, U0, material)
    if not np.isfinite(e0):
        raise SolverError("no finite-energy feasible start")
    scale = max(1.0, abs(e0))

    def objective(x):
        U = U0.copy()
        U[free] = x.reshape(-1, 2)
        val, force = assemble(grid, U, material)
        if not np.isfinite(val):
            return np.inf, None
        return val, force[free].ravel()

    project = None
    if constraint.kind == "mean_zero":
        n_free = int(free.sum())

        def project(x):
            u = x.reshape(-1, 2)
            return (u - u.mean(axis=0)).ravel()

    res = lbfgs(
        objective,
        U0[free].ravel(),
        tol=tol_factor * scale,
        maxiter=maxiter,
        project=project,
        record_trace=True,
    )
    U = U0.copy()
    U[free] = res.x.reshape(-1, 2)
    deformation = DiscreteDeformation(mesh, U, constraint)
    return MinimizeResult(
        deformation=deformation,
        energy=res.value,
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        converged=res.converged,
        message=res.message,
        energy_trace=res.trace,
        min_det=deformation.min_quad_det(),
    )


@dataclass(frozen=True)
class AffineFit:
    F: np.ndarray
    b: np.ndarray
    residual: float
    dist_K: float


def best_affine_fit(deformation, lam=None):
    """Least-squares affine map to the nodal positions."""
    mesh = deformation.mesh
    lam = lam if lam is not None else mesh.partition.lam
    X = np.column_stack([mesh.nodes, np.ones(len(mesh.nodes))])
    coef, *_ = np.linalg.lstsq(X, deformation.U, rcond=None)
    F = coef[:2].T
    b = coef[2]
    residual = float(
        np.sqrt(np.mean(np.sum((X @ coef - deformation.U) ** 2, axis=1)))
    )
    dist_K = k_membership(F, lam).distance
    return AffineFit(F, b, residual, dist_K)


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    energy: float
    energy_per_area: float
    F: np.ndarray
    dist_K: float
    min_det: float
    stiff_dist_p: float
    iters: int
    flag: str


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    beta: float
    fitted_C: float | None
    fitted_exponent: float | None

    def csv_lines(self):
        head = "epsilon,energy,energy_per_area,F11,F12,F21,F22,dist_K,min_det,stiff_dist_p,iters,flag"
        lines = [head]
        for r in self.rows:
            F = r.F
            lines.append(
                f"{r.epsilon:.12g},{r.energy:.12g},{r.energy_per_area:.12g},"
                f"{F[0, 0]:.12g},{F[0, 1]:.12g},{F[1, 0]:.12g},{F[1, 1]:.12g},"
                f"{r.dist_K:.12g},{r.min_det:.12g},{r.stiff_dist_p:.12g},{r.iters},{r.flag}"
            )
        return lines

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")


def homogenization_experiment(
    F, eps_list, lam, material=None, resolution=4, domain=None, maxiter=5000
):
    """Minimize at each eps and tabulate convergence toward the effective model.

    Rows record total and per-area energy, the best affine fit and its
    distance to the attainable set, the smallest quadrature determinant, and
    the stiff-phase dist^p integral (whose eps-scaling is fitted when
    positive).  Failures flag the row and the experiment continues.
    """
    material = material if material is not None else Material()
    domain = domain if domain is not None else Rect(0.0, 0.0, 1.0, 1.0)
    F = np.asarray(F, dtype=float)
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise SolverError("eps list must be strictly decreasing")
    in_K = k_membership(F, lam).in_K
    rows = []
    for eps in eps_list:
        try:
            mesh = build_mesh(domain, eps, resolution, lam)
            res = minimize(mesh, affine_boundary(F), material, maxiter=maxiter)
            fit = best_affine_fit(res.deformation)
            flag = "ok" if res.converged else res.message.replace(" ", "_")
            if not in_K:
                flag = "outside_K"
            sdp = stiff_distance_integral(mesh.grid, res.deformation.U, material.p)
            rows.append(
                ConvergenceRow(
                    epsilon=eps,
                    energy=res.energy,
                    energy_per_area=res.energy / domain.area,
                    F=fit.F,
                    dist_K=fit.dist_K,
                    min_det=res.min_det,
                    stiff_dist_p=sdp,
                    iters=res.iterations,
                    flag=flag,
                )
            )
        except (SolverError, GeometryError, KMembershipError) as exc:
            rows.append(
                ConvergenceRow(eps, math.inf, math.inf, np.full((2, 2), np.nan),
                               math.inf, math.nan, math.inf, 0, f"failed:{exc}")
            )
    good = [r for r in rows if np.isfinite(r.stiff_dist_p) and r.stiff_dist_p > 0]
    fitted_C = fitted_exp = None
    if len(good) >= 2:
        beta = material.beta
        fitted_C = max(r.stiff_dist_p / r.epsilon**beta for r in good)
        xs = np.log([r.epsilon for r in good])
        ys = np.log([r.stiff_dist_p for r in good])
        fitted_exp = float(np.polyfit(xs, ys, 1)[0])
    return ConvergenceReport(tuple(rows), material.beta, fitted_C, fitted_exp)
