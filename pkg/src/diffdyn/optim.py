"""Unconstrained quasi-Newton minimization: L-BFGS two-loop recursion with a
backtracking Armijo line search.  Shared by the estimation and design layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizeOptions", "OptimizeResult", "lbfgs_minimize"]


@dataclass
class OptimizeOptions:
    max_iterations: int = 100
    history: int = 10                # number of curvature pairs kept
    g_tol: float = 1e-8              # sup-norm gradient tolerance
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    max_line_search: int = 40
    record: bool = False             # keep per-iteration (value, x) history

    def __post_init__(self):
        if min(self.max_iterations, self.history, self.max_line_search) <= 0:
            raise ValueError("iteration counts must be positive")
        if min(self.g_tol, self.armijo_c1, self.shrink) <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    reason: str                      # "gradient" | "max_iterations" |
    #                                  "line_search_failed" | "non_finite"
    history: list = field(default_factory=list)

    def __repr__(self):
        return (
            f"OptimizeResult(value={self.value:.6g}, iterations={self.iterations}, "
            f"converged={self.converged}, reason={self.reason!r})"
        )


def lbfgs_minimize(objective, x0, opts: OptimizeOptions | None = None) -> OptimizeResult:
    """Minimize ``objective: x -> (value, gradient)`` starting from x0.

    Accepted steps never increase the objective.  Terminates on the gradient
    tolerance, the iteration cap, or a failed line search (each reported
    distinctly via ``reason``).  A non-finite value or gradient at an
    accepted point aborts with the last good iterate.
    """
    opts = opts or OptimizeOptions()
    x = np.asarray(x0, dtype=float).copy()
    f, g = _eval(objective, x)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at x0")
    hist = [(f, x.copy())] if opts.record else []

    s_list, y_list, rho_list = [], [], []
    iterations = 0
    reason = "max_iterations"
    converged = False

    for _ in range(opts.max_iterations):
        if np.max(np.abs(g)) < opts.g_tol:
            converged = True
            reason = "gradient"
            break

        d = _two_loop_direction(g, s_list, y_list, rho_list)
        if not s_list:
            # No curvature information yet: temper the raw gradient so the
            # unit trial step is a sane distance.
            d *= min(1.0, 1.0 / float(np.sum(np.abs(g))))
        gd = float(np.dot(g, d))
        if gd >= 0.0:
            # Fall back on steepest descent if curvature info went bad.
            d = -g
            gd = -float(np.dot(g, g))

        accepted, x_new, f_new, g_new = _line_search(objective, x, f, d, gd, opts)
        if not accepted and s_list:
            # Retry once along steepest descent with the memory dropped; a
            # stale quasi-Newton model is the usual culprit.
            s_list, y_list, rho_list = [], [], []
            d = -g
            gd = -float(np.dot(g, g))
            accepted, x_new, f_new, g_new = _line_search(objective, x, f, d, gd, opts)
        if not accepted:
            reason = "line_search_failed"
            break
        if g_new is None or not np.all(np.isfinite(g_new)):
            reason = "non_finite"
            break

        s = x_new - x
        y = g_new - g
        ys = float(np.dot(y, s))
        if ys > 1e-10:
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / ys)
            if len(s_list) > opts.history:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        else:
            # Non-positive curvature along the step: drop the whole memory
            # rather than let stale pairs pin the direction (keeps the
            # implicit inverse Hessian positive definite).
            s_list, y_list, rho_list = [], [], []

        x, f, g = x_new, f_new, g_new
        iterations += 1
        if opts.record:
            hist.append((f, x.copy()))
    else:
        # Loop exhausted; check convergence at the final iterate.
        if np.max(np.abs(g)) < opts.g_tol:
            converged = True
            reason = "gradient"

    return OptimizeResult(x, f, iterations, converged, reason, hist)


def _eval(objective, x):
    f, g = objective(x)
    return float(f), np.asarray(g, dtype=float)


def _line_search(objective, x, f, d, gd, opts):
    """Backtracking Armijo, halving on rejection.

    The unit-step trial additionally fits a quadratic through (f, gd, f(1))
    and adopts its minimizer when that point is better; on quadratic
    objectives this is the exact line minimizer, which is what makes the
    optimizer terminate in ~dimension many iterations there.
    """
    step = 1.0
    for trial in range(opts.max_line_search):
        x_new = x + step * d
        try:
            f_new, g_new = _eval(objective, x_new)
        except (ArithmeticError, ValueError):
            f_new, g_new = math.inf, None
        if trial == 0 and math.isfinite(f_new):
            denom = f_new - f - gd
            if denom > 0.0:
                a = -0.5 * gd / denom
                if 1e-4 < a < 100.0:
                    x_a = x + a * d
                    try:
                        f_a, g_a = _eval(objective, x_a)
                    except (ArithmeticError, ValueError):
                        f_a = math.inf
                    if f_a < f_new:
                        x_new, f_new, g_new, step = x_a, f_a, g_a, a
        if math.isfinite(f_new) and f_new <= f + opts.armijo_c1 * step * gd:
            return True, x_new, f_new, g_new
        step = min(step, 1.0) * opts.shrink
    return False, x, f, None


def _two_loop_direction(g, s_list, y_list, rho_list):
    q = -g.copy()
    if not s_list:
        return q
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    # Initial scaling gamma = s'y / y'y from the newest pair.
    gamma = 1.0 / (rho_list[-1] * float(np.dot(y_list[-1], y_list[-1])))
    q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q
