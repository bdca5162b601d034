"""Numerical laboratory for stiff/soft checkerboard auxetics.

Exact rotating-squares kinematics, the attainable set of conformal
contractions with its homogenized energy, quantitative rigidity fitting on
cross structures, and desk-scale energy-minimization experiments.
"""

from .geometry import (
    CellPartition,
    CrossStructure,
    GeometryError,
    LatticeIndex,
    Rect,
    Tile,
    build_partition,
    cross_structure,
    lattice_cells,
    tile_at,
)
from .kinematics import (
    BoundaryCase,
    BoundaryClass,
    MicrocrackMap,
    PiecewiseAffineMap,
    check_ciarlet_necas,
    check_orientation,
    classify_soft_boundary,
    microcrack_map,
    periodic_limit_gradient,
    reflection_branch_F,
    reflection_branch_G,
    rot,
    rotating_squares_map,
)
from .effective import (
    KMembershipError,
    decompose_in_K,
    det_identity,
    k_membership,
    poisson_ratio,
    rectangle_effective,
)
from .energy import (
    Material,
    eval_density,
    eval_W_hom,
    laminate_qc,
    solve_cell_formula,
)
from .rigidity import (
    CrossFit,
    SampledField,
    approximate_ciarlet_check,
    fit_cross_rotations,
    fit_square_rotation,
    measure_rigidity_scaling,
    nearest_rotation,
    poincare_quotient,
    sample_field,
)
from .solver import (
    Constraint,
    ConvergenceReport,
    DiscreteDeformation,
    MEAN_ZERO,
    Mesh,
    affine_boundary,
    assemble_energy,
    best_affine_fit,
    build_mesh,
    homogenization_experiment,
    init_affine,
    init_mechanism,
    minimize,
)
from .svg import render_svg

__version__ = "0.1.0"
