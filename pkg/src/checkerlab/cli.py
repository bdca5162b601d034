"""Experiment runner: configure, execute, write CSV tables and SVG figures.

Configs are single JSON documents with a fixed schema; unknown keys are
rejected with the offending path named.  Exit codes: 0 success, 1 experiment
failure (partial artifacts keep a .partial suffix), 2 configuration problem.
Independent parameter points may run concurrently, capped by LAB_THREADS;
artifact writes stay serialized and row order is deterministic.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .effective import KMembershipError, k_membership
from .energy import Material, eval_W_hom, solve_cell_formula
from .geometry import Rect, build_partition, cross_structure, LatticeIndex
from .kinematics import (
    check_ciarlet_necas,
    check_orientation,
    microcrack_map,
    rot,
    rotating_squares_map,
)
from .rigidity import measure_rigidity_scaling, poincare_quotient, sample_field
from .solver import (
    Rect as _Rect,  # noqa: F401  (re-exported for config hints)
    affine_boundary,
    best_affine_fit,
    build_mesh,
    homogenization_experiment,
    minimize,
)
from .svg import render_svg

EXPERIMENTS = (
    "deform",
    "rigidity_scaling",
    "cell_formula",
    "homogenize",
    "poincare",
    "microcrack",
)

_SCHEMA = {
    "experiment": None,
    "seed": None,
    "geometry": {"lambda", "mu", "epsilon", "epsilon_list", "domain", "inner", "cells"},
    "material": {"p", "beta", "c", "variant", "rigid"},
    "solver": {
        "resolution",
        "max_iterations",
        "tolerance_factor",
        "mesh_n",
        "levels",
        "samples",
    },
    "angles": {"S_deg", "R_deg"},
    "F": None,
    "output": {"dir", "prefix"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int | None = None
    geometry: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    angles: dict = field(default_factory=dict)
    F: list | None = None
    output: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"experiment": self.experiment}
        if self.seed is not None:
            d["seed"] = self.seed
        for name in ("geometry", "material", "solver", "angles"):
            block = getattr(self, name)
            if block:
                d[name] = dict(block)
        if self.F is not None:
            d["F"] = [list(row) for row in self.F]
        if self.output:
            d["output"] = dict(self.output)
        return d

    # -- typed accessors -------------------------------------------------
    @property
    def lam(self):
        return float(self._require("geometry", "lambda"))

    def _require(self, block, key):
        data = getattr(self, block)
        if key not in data:
            raise ConfigError(f"{block}.{key}: required for experiment {self.experiment!r}")
        return data[key]

    def matrix_F(self):
        if self.F is None:
            raise ConfigError(f"F: required for experiment {self.experiment!r}")
        F = np.asarray(self.F, dtype=float)
        if F.shape != (2, 2):
            raise ConfigError("F: must be a 2x2 matrix")
        return F

    def domain_rect(self, key="domain", default=(0.0, 0.0, 1.0, 1.0)):
        vals = self.geometry.get(key, list(default))
        if len(vals) != 4:
            raise ConfigError(f"geometry.{key}: must be [x0, y0, x1, y1]")
        r = Rect(*map(float, vals))
        if r.area <= 0:
            raise ConfigError(f"geometry.{key}: empty rectangle")
        return r

    def material_obj(self):
        m = self.material
        mat = Material(
            p=float(m.get("p", 2.0)),
            beta=float(m.get("beta", 4.0)),
            c=float(m.get("c", 1.0)),
            variant=str(m.get("variant", "default")),
            rigid=bool(m.get("rigid", False)),
        )
        if mat.p < 2.0:
            raise ConfigError("material.p: must be at least 2")
        if mat.beta <= 0 or mat.c <= 0:
            raise ConfigError("material.beta and material.c must be positive")
        if mat.variant != "default":
            raise ConfigError("material.variant: only 'default' is configurable from files")
        return mat


def _check_keys(data):
    for key, sub in data.items():
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown configuration key")
        allowed = _SCHEMA[key]
        if allowed is not None:
            if not isinstance(sub, dict):
                raise ConfigError(f"{key}: must be an object")
            for k in sub:
                if k not in allowed:
                    raise ConfigError(f"{key}.{k}: unknown configuration key")


def parse_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("top level: must be a JSON object")
    _check_keys(data)
    if "experiment" not in data:
        raise ConfigError("experiment: required field is missing")
    exp = data["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: {exp!r} is not one of {', '.join(EXPERIMENTS)}")
    cfg = ExperimentConfig(
        experiment=exp,
        seed=data.get("seed"),
        geometry=dict(data.get("geometry", {})),
        material=dict(data.get("material", {})),
        solver=dict(data.get("solver", {})),
        angles=dict(data.get("angles", {})),
        F=data.get("F"),
        output=dict(data.get("output", {})),
    )
    if cfg.seed is not None and not isinstance(cfg.seed, int):
        raise ConfigError("seed: must be an integer")
    if exp == "rigidity_scaling" and cfg.seed is None:
        raise ConfigError("seed: required for the randomized rigidity_scaling experiment")
    lam = cfg.geometry.get("lambda")
    if lam is not None and not (0.0 < float(lam) < 1.0):
        raise ConfigError("geometry.lambda: must lie strictly inside (0,1)")
    return cfg


def _workers(n_tasks):
    cap = int(os.environ.get("LAB_THREADS", "1"))
    return max(1, min(cap, n_tasks))


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(lines):
    return "\n".join(lines) + "\n"


def _out_path(cfg, suffix):
    out = cfg.output.get("dir", "out")
    prefix = cfg.output.get("prefix", cfg.experiment)
    return os.path.join(out, f"{prefix}_{cfg.experiment}{suffix}")


# ---------------------------------------------------------------------------
# experiment drivers

def _run_deform(cfg):
    lam = cfg.lam
    partition = build_partition(lam)
    S = rot(math.radians(float(cfg.angles.get("S_deg", 30.0))))
    R = rot(math.radians(float(cfg.angles.get("R_deg", -30.0))))
    eps = float(cfg.geometry.get("epsilon", 1.0))
    cells = int(cfg.geometry.get("cells", 3))
    m = rotating_squares_map(S, R, partition, eps)
    domain = Rect(0.0, 0.0, cells * eps, cells * eps)
    cn = check_ciarlet_necas(m, domain)
    G = m.tile_gradients
    lines = ["tile,G11,G12,G21,G22,det"]
    for tile, M in G.items():
        d = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        lines.append(
            f"{tile.value},{M[0, 0]:.12g},{M[0, 1]:.12g},{M[1, 0]:.12g},{M[1, 1]:.12g},{d:.12g}"
        )
    lines.append(f"orientation_preserving,{str(check_orientation(m)).lower()},,,,")
    lines.append(f"injectivity_deficit,{cn.deficit:.12g},,,,")
    _write(_out_path(cfg, ".csv"), _csv(lines))
    _write(_out_path(cfg, ".svg"), render_svg(m, cells=cells))


def _run_microcrack(cfg):
    lam = cfg.lam
    partition = build_partition(lam)
    F = cfg.matrix_F()
    m = microcrack_map(F, partition)
    G = m.mean_gradient()
    cells = int(cfg.geometry.get("cells", 3))
    lines = ["quantity,value_11,value_12,value_21,value_22"]
    lines.append(
        f"mean_gradient,{G[0, 0]:.12g},{G[0, 1]:.12g},{G[1, 0]:.12g},{G[1, 1]:.12g}"
    )
    j1 = m.jump((0, 0), (1, 0))
    j2 = m.jump((0, 0), (0, 1))
    lines.append(f"jump_e1,{j1[0]:.12g},{j1[1]:.12g},,")
    lines.append(f"jump_e2,{j2[0]:.12g},{j2[1]:.12g},,")
    _write(_out_path(cfg, ".csv"), _csv(lines))
    _write(_out_path(cfg, ".svg"), render_svg(m, cells=cells))


def _run_homogenize(cfg):
    lam = cfg.lam
    F = cfg.matrix_F()
    eps_list = [float(e) for e in cfg._require("geometry", "epsilon_list")]
    material = cfg.material_obj()
    resolution = int(cfg.solver.get("resolution", 4))
    maxiter = int(cfg.solver.get("max_iterations", 5000))
    domain = cfg.domain_rect()
    report = homogenization_experiment(
        F, eps_list, lam, material, resolution, domain, maxiter=maxiter
    )
    _write(_out_path(cfg, ".csv"), _csv(report.csv_lines()))
    mesh = build_mesh(domain, eps_list[-1], resolution, lam)
    res = minimize(mesh, affine_boundary(F), material, maxiter=maxiter)
    _write(_out_path(cfg, ".svg"), render_svg(res.deformation))


def _run_cell_formula(cfg):
    lam = cfg.lam
    F = cfg.matrix_F()
    material = cfg.material_obj()
    if "rigid" not in cfg.material:
        material = Material(
            p=material.p, beta=material.beta, c=material.c, variant=material.variant,
            rigid=True,
        )
    mesh_n = cfg.solver.get("mesh_n", 16)
    ns = [int(n) for n in (mesh_n if isinstance(mesh_n, list) else [mesh_n])]
    try:
        whom = eval_W_hom(F, lam, material=material)
    except KMembershipError:
        whom = math.inf
    lines = ["n,value,W_hom,rel_error,converged,label"]
    label = "exact" if material.qc_exact else "upper_bound"
    for n in ns:
        res = solve_cell_formula(F, lam, material, mesh_n=n)
        rel = (res.value - whom) / whom if whom not in (0.0, math.inf) else math.nan
        lines.append(
            f"{n},{res.value:.12g},{whom:.12g},{rel:.12g},{str(res.converged).lower()},{label}"
        )
    _write(_out_path(cfg, ".csv"), _csv(lines))


def _run_rigidity_scaling(cfg):
    lam = cfg.lam
    partition = build_partition(lam)
    rng = np.random.default_rng(cfg.seed)
    S0 = rot(math.radians(float(cfg.angles.get("S_deg", 20.0))))
    R0 = rot(math.radians(float(cfg.angles.get("R_deg", -35.0))))
    cross = cross_structure(LatticeIndex((0, 0), float(cfg.geometry.get("epsilon", 1.0))), partition)
    levels = [float(t) for t in cfg.solver.get("levels", [1e-1, 1e-2, 1e-3, 1e-4])]
    n = int(cfg.solver.get("samples", 12))
    coef = rng.normal(size=(2, 2, 3))

    def perturbation(pts):
        G = np.zeros((len(pts), 2, 2))
        for a in range(2):
            for b in range(2):
                c0, c1, c2 = coef[a, b]
                G[:, a, b] = c0 * np.sin(pts[:, 0]) + c1 * np.cos(pts[:, 1]) + c2
        return G

    report = measure_rigidity_scaling((S0, R0), perturbation, levels, cross, n=n)
    _write(_out_path(cfg, ".csv"), _csv(report.csv_rows()))


def _run_poincare(cfg):
    lam = cfg.lam
    partition = build_partition(lam)
    eps_list = [float(e) for e in cfg._require("geometry", "epsilon_list")]
    outer = cfg.domain_rect()
    shrink = 0.25 * min(outer.width, outer.height)
    inner = cfg.domain_rect(
        "inner",
        (outer.x0 + shrink, outer.y0 + shrink, outer.x1 - shrink, outer.y1 - shrink),
    )
    n = int(cfg.solver.get("samples", 48))

    def value(pts):
        return np.column_stack(
            [np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1]), pts[:, 0] * pts[:, 1]]
        )

    def grad(pts):
        G = np.empty((len(pts), 2, 2))
        G[:, 0, 0] = np.pi * np.cos(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])
        G[:, 0, 1] = -np.pi * np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        G[:, 1, 0] = pts[:, 1]
        G[:, 1, 1] = pts[:, 0]
        return G

    def one(eps):
        f = sample_field([outer], n, grad, value_fn=value, partition=partition, eps=eps)
        r = poincare_quotient(f, inner, outer, eps)
        return eps, r

    with ThreadPoolExecutor(max_workers=_workers(len(eps_list))) as pool:
        results = list(pool.map(one, eps_list))
    lines = ["epsilon,quotient,value_norm,gradient_norm,boundary_ratio,verified"]
    for eps, r in results:
        lines.append(
            f"{eps:.12g},{r.quotient:.12g},{r.value_norm:.12g},{r.gradient_norm:.12g},"
            f"{r.boundary_ratio:.12g},{str(r.preconditions_verified).lower()}"
        )
    _write(_out_path(cfg, ".csv"), _csv(lines))


_DRIVERS = {
    "deform": _run_deform,
    "microcrack": _run_microcrack,
    "homogenize": _run_homogenize,
    "cell_formula": _run_cell_formula,
    "rigidity_scaling": _run_rigidity_scaling,
    "poincare": _run_poincare,
}


def run(config_path):
    """Execute the configured experiment; returns the process exit code."""
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _DRIVERS[cfg.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # experiment failure: keep partial artifacts
        for suffix in (".csv", ".svg"):
            path = _out_path(cfg, suffix)
            if os.path.exists(path):
                os.replace(path, path + ".partial")
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return 0


def render(config_path):
    """Render only the SVG artifact of a deform/microcrack config."""
    try:
        cfg = parse_config(config_path)
        if cfg.experiment not in ("deform", "microcrack"):
            raise ConfigError("render: only deform and microcrack configs produce pure figures")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if cfg.experiment == "deform":
            partition = build_partition(cfg.lam)
            S = rot(math.radians(float(cfg.angles.get("S_deg", 30.0))))
            R = rot(math.radians(float(cfg.angles.get("R_deg", -30.0))))
            m = rotating_squares_map(S, R, partition, float(cfg.geometry.get("epsilon", 1.0)))
        else:
            m = microcrack_map(cfg.matrix_F(), build_partition(cfg.lam))
        _write(_out_path(cfg, ".svg"), render_svg(m, cells=int(cfg.geometry.get("cells", 3))))
    except Exception as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return 0


def validate(config_path):
    try:
        parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print("ok")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lab", description="checkerboard metamaterial experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute an experiment config"),
        ("render", "render the figure of a config without running analyses"),
        ("validate", "check a config file"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a JSON experiment config")
    args = parser.parse_args(argv)
    handler = {"run": run, "render": render, "validate": validate}[args.command]
    return handler(args.config)


if __name__ == "__main__":
    sys.exit(main())
