"""The attainable set of macroscopic gradients and its decompositions.

A checkerboard with two free rotations reaches exactly the conformal
contractions F = alpha*Q with sqrt(area_stiff) <= alpha <= 1.  This module
tests membership, splits F back into its (at most two) rotation pairs,
verifies the determinant identity det(lam*S+(1-lam)*R) =
area_stiff + area_soft*(Se1.Re1), evaluates the Poisson ratio, and covers the
rectangle-tile generalization.

All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import det2, perp_vec, rotation_from_first_column

MEMBERSHIP_TOL = 1e-10
RADICAND_CLAMP = 1e-12  # tangency |Fe1|=1 is measure-zero and numerically fuzzy


class EffectiveModelError(ValueError):
    pass


class KMembershipError(EffectiveModelError):
    """Matrix outside the attainable conformal set."""


@dataclass(frozen=True)
class KMembership:
    in_K: bool
    distance: float
    alpha: float
    conformal_defect: float


def k_membership(F, lam, tol=MEMBERSHIP_TOL):
    """Membership in {alpha*Q : sqrt(area_stiff) <= alpha <= 1}.

    The distance is a diagnostic seminorm (conformality defect combined with
    the clamp excess of alpha), zero exactly on the set; it is not the
    Euclidean distance to the set.
    """
    if not (0.0 < lam < 1.0):
        raise EffectiveModelError(f"volume fraction must lie in (0,1), got {lam}")
    F = np.asarray(F, dtype=float)
    defect = float(np.linalg.norm(F[:, 1] - perp_vec(F[:, 0])))
    alpha = float(np.linalg.norm(F[:, 0]))
    alpha_min = np.sqrt(lam**2 + (1.0 - lam) ** 2)
    excess = max(0.0, alpha_min - alpha, alpha - 1.0)
    in_K = defect <= tol and excess <= tol
    return KMembership(in_K, float(np.hypot(defect, excess)), alpha, defect)


def decompose_in_K(F, lam, tol=MEMBERSHIP_TOL):
    """All rotation pairs (S, R) with lam*S + (1-lam)*R = F and Se1.Re1 >= 0.

    There are exactly two pairs for |Fe1| < 1 and one on the rotation circle
    |Fe1| = 1.  Candidates from the two closed-form branches are paired by
    recomposition residual; radicands in [-1e-12, 0) are clamped to zero.
    """
    F = np.asarray(F, dtype=float)
    member = k_membership(F, lam, tol=max(tol, 1e-9))
    if not member.in_K:
        raise KMembershipError(
            f"matrix is not an attainable gradient (diagnostic distance {member.distance:.3e})"
        )
    fe1 = F[:, 0]
    fe2 = F[:, 1]
    a2 = float(fe1 @ fe1)
    radicand = 4.0 * lam * lam * a2 - (a2 + 2.0 * lam - 1.0) ** 2
    if radicand < -RADICAND_CLAMP:
        raise EffectiveModelError(
            f"negative radicand {radicand:.3e} beyond clamp; inconsistent input"
        )
    root = np.sqrt(max(radicand, 0.0))
    pairs = []
    for sign in (+1.0, -1.0):
        se1 = ((a2 + 2.0 * lam - 1.0) * fe1 + sign * root * fe2) / (2.0 * lam * a2)
        nrm = np.linalg.norm(se1)
        if abs(nrm - 1.0) > 1e-6:
            continue
        se1 = se1 / nrm
        re1 = (fe1 - lam * se1) / (1.0 - lam)
        rnrm = np.linalg.norm(re1)
        if abs(rnrm - 1.0) > 1e-6:
            continue
        re1 = re1 / rnrm
        S = rotation_from_first_column(se1)
        R = rotation_from_first_column(re1)
        if se1 @ re1 < -1e-9:
            continue
        if np.linalg.norm(lam * S + (1.0 - lam) * R - F) > 1e-10 * max(1.0, np.linalg.norm(F)):
            continue
        if any(np.linalg.norm(S - S0) <= 1e-9 and np.linalg.norm(R - R0) <= 1e-9 for S0, R0 in pairs):
            continue
        pairs.append((S, R))
    if not pairs:
        raise EffectiveModelError("no admissible decomposition found")
    return pairs


def det_identity(S, R, lam, tol=1e-12):
    """det(lam*S + (1-lam)*R), asserted against the closed-form identity.

    The determinant of the averaged rotation equals
    area_stiff + area_soft*(Se1.Re1) exactly.
    """
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    d = det2(lam * S + (1.0 - lam) * R)
    sp = float(S[:, 0] @ R[:, 0])
    rhs = (lam**2 + (1.0 - lam) ** 2) + 2.0 * lam * (1.0 - lam) * sp
    if abs(d - rhs) > tol:
        raise AssertionError(
            f"determinant identity violated: {d!r} vs {rhs!r} (diff {d - rhs:.3e})"
        )
    return float(d)


def poisson_ratio(F, tol=MEMBERSHIP_TOL):
    """Poisson ratio of a non-trivial conformal contraction: exactly -1.

    Computed from the singular values of F (frame-independent); both equal
    alpha for conformal F, so the transversal and axial strains coincide and
    the ratio is -1 exactly.  Raises on alpha = 1 (zero strain).
    """
    F = np.asarray(F, dtype=float)
    sv = np.linalg.svd(F, compute_uv=False)
    if abs(sv[0] - sv[1]) > 1e-10 * max(1.0, sv[0]):
        raise EffectiveModelError(
            f"matrix is not conformal (singular values {sv[0]:.6g}, {sv[1]:.6g})"
        )
    alpha = float(0.5 * (sv[0] + sv[1]))
    if abs(alpha - 1.0) <= tol:
        raise EffectiveModelError("undefined ratio: zero strain at alpha = 1")
    # transversal strain == axial strain == alpha - 1 for conformal F
    return -1.0


@dataclass(frozen=True)
class RectangleEffective:
    F: np.ndarray
    det: float
    shear: float
    column_norms: tuple


def rectangle_effective(S, R, lam, mu):
    """Effective gradient of the rectangle-tile checkerboard.

    F = ((lam*S+(1-lam)*R)e1 | (mu*S+(1-mu)*R)e2); the determinant identity
    holds with area_stiff = lam*mu + (1-lam)(1-mu), and the off-diagonal
    coupling Fe1.Fe2 equals (mu-lam)*(Re1.Se2): the columns need not be
    orthogonal, but the Poisson ratio stays negative.
    """
    if not (0.0 < lam < 1.0 and 0.0 < mu < 1.0):
        raise EffectiveModelError("both tile fractions must lie in (0,1)")
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    sp = float(S[:, 0] @ R[:, 0])
    if sp < 0.0:
        raise EffectiveModelError(
            f"inadmissible pair: Se1.Re1 = {sp:.3e} < 0"
        )
    F = np.column_stack(
        [(lam * S + (1.0 - lam) * R)[:, 0], (mu * S + (1.0 - mu) * R)[:, 1]]
    )
    area_stiff = lam * mu + (1.0 - lam) * (1.0 - mu)
    area_soft = lam * (1.0 - mu) + (1.0 - lam) * mu
    d = det2(F)
    rhs = area_stiff + area_soft * sp
    assert abs(d - rhs) <= 1e-12, f"rectangle determinant identity violated ({d} vs {rhs})"
    shear = float(F[:, 0] @ F[:, 1])
    shear_formula = (mu - lam) * float(R[:, 0] @ S[:, 1])
    assert abs(shear - shear_formula) <= 1e-12
    norms = (float(np.linalg.norm(F[:, 0])), float(np.linalg.norm(F[:, 1])))
    return RectangleEffective(F, float(d), shear, norms)
