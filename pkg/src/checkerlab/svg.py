"""Deterministic SVG rendering of deformed checkerboard lattices.

Reference tiles are outlined in light grey behind the deformed state; stiff
tiles are filled grey, soft tiles outlined.  Identical inputs produce
byte-identical documents (fixed float formatting, stable iteration order).
"""

from __future__ import annotations

import numpy as np

from .geometry import LatticeIndex, Tile
from .kinematics import MicrocrackMap, PiecewiseAffineMap

STIFF_FILL = "#b0b0b0"
STIFF_EDGE = "#555555"
SOFT_EDGE = "#888888"
REF_EDGE = "#dddddd"


def _fmt(v):
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _path(points, fill, stroke, width):
    d = "M " + " L ".join(f"{_fmt(p[0])} {_fmt(p[1])}" for p in points) + " Z"
    return f'<path d="{d}" fill="{fill}" stroke="{stroke}" stroke-width="{_fmt(width)}"/>'


def _document(polys, pad):
    pts = np.concatenate([p for p, *_ in polys])
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    w, h = hi - lo
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(lo[0])} {_fmt(-hi[1])} '
        f'{_fmt(w)} {_fmt(h)}" width="640" height="{_fmt(640 * h / w)}">',
        '<g transform="scale(1,-1)">',
    ]
    for points, fill, stroke, width in polys:
        lines.append(_path(points, fill, stroke, width))
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _cells_range(cells):
    if isinstance(cells, int):
        return [(i, j) for j in range(cells) for i in range(cells)]
    return list(cells)


def render_map_svg(m, cells=3, show_reference=True):
    """Render a mechanism or microcrack map on a patch of cells."""
    if isinstance(m, PiecewiseAffineMap):
        eps, partition = m.eps, m.partition
        image = lambda rect: m.evaluate(rect.corners())
    elif isinstance(m, MicrocrackMap):
        eps, partition = 1.0, m.partition
        image = lambda rect: m.evaluate(rect.corners())
    else:
        raise TypeError(f"cannot render object of type {type(m).__name__}")
    stroke_w = 0.01 * eps
    polys = []
    order = _cells_range(cells)
    if show_reference:
        for k in order:
            for tile in Tile:
                rect = LatticeIndex(k, eps).tile_rect(partition, tile)
                polys.append((rect.corners(), "none", REF_EDGE, stroke_w))
    if isinstance(m, MicrocrackMap):
        # draw only the translating stiff squares: the cracks are the gaps
        for k in order:
            for tile in (Tile.Y1, Tile.Y3):
                rect = LatticeIndex(k, eps).tile_rect(partition, tile)
                shifted = rect.corners() + m.cell_shift(k)[None]
                polys.append((shifted, STIFF_FILL, STIFF_EDGE, stroke_w))
    else:
        for k in order:
            for tile in (Tile.Y2, Tile.Y4):
                rect = LatticeIndex(k, eps).tile_rect(partition, tile)
                polys.append((image(rect), "none", SOFT_EDGE, stroke_w))
        for k in order:
            for tile in (Tile.Y1, Tile.Y3):
                rect = LatticeIndex(k, eps).tile_rect(partition, tile)
                polys.append((image(rect), STIFF_FILL, STIFF_EDGE, stroke_w))
    return _document(polys, pad=0.15 * eps)


def render_deformation_svg(deformation, show_reference=True):
    """Render a discrete deformation: element quads, stiff filled."""
    mesh = deformation.mesh
    grid = mesh.grid
    stroke_w = 0.01 * mesh.eps
    polys = []
    if show_reference:
        for e in range(grid.n_elems):
            ref = grid.nodes[grid.elem_nodes[e]]
            polys.append((ref, "none", REF_EDGE, 0.3 * stroke_w))
    order = np.argsort(~grid.stiff, kind="stable")  # stiff drawn first
    for e in order:
        quad = deformation.U[grid.elem_nodes[e]]
        if grid.stiff[e]:
            polys.append((quad, STIFF_FILL, STIFF_EDGE, 0.5 * stroke_w))
        else:
            polys.append((quad, "none", SOFT_EDGE, 0.3 * stroke_w))
    return _document(polys, pad=0.15 * mesh.eps)


def render_svg(obj, cells=3, show_reference=True):
    """Dispatching renderer; deterministic output for identical inputs."""
    from .solver import DiscreteDeformation

    if isinstance(obj, DiscreteDeformation):
        return render_deformation_svg(obj, show_reference=show_reference)
    return render_map_svg(obj, cells=cells, show_reference=show_reference)
