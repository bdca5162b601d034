"""Quasi-Newton descent with extended-real objectives.

L-BFGS with Armijo backtracking; a step that lands outside the feasible
region (objective +inf, e.g. a quadrature determinant under the orientation
barrier) is rejected by halving, which the library line searches do not
handle reliably.  An optional projection (mean-zero constraint) is applied
after every accepted step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def lbfgs(fun, x0, tol=1e-8, maxiter=5000, memory=10, project=None, record_trace=False):
    """Minimize fun(x) -> (value, gradient) from x0.

    Terminates when the gradient infinity-norm drops below tol or after
    maxiter iterations; returns the best iterate either way.  fun may return
    (+inf, None) to mark infeasible points.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    f, g = fun(x)
    if not np.isfinite(f):
        return OptResult(x, float(f), np.inf, 0, False, "infeasible start")
    s_list, y_list, rho_list = [], [], []
    trace = [f] if record_trace else []
    n_iter = 0
    message = "max iterations reached"
    converged = False
    for n_iter in range(1, maxiter + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            message = "gradient tolerance reached"
            converged = True
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, r), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        d = -q
        dg = d @ g
        if dg >= 0.0:
            d = -g
            dg = -(g @ g)
        t = 1.0 if y_list else min(1.0, 1.0 / max(gnorm, 1.0))
        accepted = False
        for _ in range(60):
            x_new = x + t * d
            if project is not None:
                x_new = project(x_new)
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * dg:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = "line search failed"
            break
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x_new, f_new, g_new
        if record_trace:
            trace.append(f)
    return OptResult(
        x, float(f), float(np.max(np.abs(g))), n_iter, converged, message, trace
    )
