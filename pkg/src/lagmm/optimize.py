"""Quasi-Newton minimization: BFGS with a strong Wolfe line search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import SpecError

CURVATURE_FLOOR = 1e-10


@dataclass(frozen=True)
class OptimizerOptions:
    """Tolerances and limits for the BFGS driver.

    ``grad_tol`` bounds the infinity norm of the gradient at termination;
    ``c1``/``c2`` are the sufficient-decrease and curvature constants of the
    Wolfe conditions.
    """

    grad_tol: float = 1e-8
    max_iterations: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_steps: int = 40

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise SpecError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.grad_tol <= 0.0:
            raise SpecError("gradient tolerance must be positive")
        if self.max_iterations < 1 or self.max_line_search_steps < 1:
            raise SpecError("iteration limits must be at least 1")


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool
    status: str  # "converged" | "max_iterations" | "line_search_failed"
    n_fun_evals: int
    n_grad_evals: int


class _LineSearchResult(NamedTuple):
    ok: bool
    alpha: float
    f: float
    g: np.ndarray | None
    evals: int


def _wolfe_line_search(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    direction: np.ndarray,
    f0: float,
    derphi0: float,
    opts: OptimizerOptions,
) -> _LineSearchResult:
    """Find a step satisfying the strong Wolfe conditions along ``direction``.

    Bracketing with doubling steps, then sectioning with safeguarded
    quadratic interpolation.  One budget unit = one (f, grad) evaluation.
    """
    c1, c2 = opts.c1, opts.c2
    budget = opts.max_line_search_steps
    evals = 0

    def phi(alpha: float) -> tuple[float, np.ndarray, float]:
        xa = x + alpha * direction
        fa = float(objective(xa))
        ga = np.asarray(gradient(xa), dtype=float)
        return fa, ga, float(ga @ direction)

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi) -> _LineSearchResult:
        nonlocal evals
        while evals < budget:
            span = a_hi - a_lo
            if abs(span) < 1e-16 * max(1.0, abs(a_lo)):
                break
            # Quadratic fit through (a_lo, f_lo, d_lo) and (a_hi, f_hi);
            # fall back to bisection when the fit is unusable.
            denom = 2.0 * (f_hi - f_lo - d_lo * span)
            alpha = a_lo - d_lo * span * span / denom if denom != 0.0 else np.nan
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            margin = 0.1 * (hi - lo)
            if not np.isfinite(alpha) or alpha < lo + margin or alpha > hi - margin:
                alpha = 0.5 * (a_lo + a_hi)
            fa, ga, da = phi(alpha)
            evals += 1
            if not np.isfinite(fa) or fa > f0 + c1 * alpha * derphi0 or fa >= f_lo:
                a_hi, f_hi = alpha, fa
            else:
                if abs(da) <= -c2 * derphi0:
                    return _LineSearchResult(True, alpha, fa, ga, evals)
                if da * span >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, d_lo = alpha, fa, da
        return _LineSearchResult(False, 0.0, f0, None, evals)

    alpha_prev, f_prev, d_prev = 0.0, f0, derphi0
    alpha = 1.0
    first = True
    while evals < budget:
        fa, ga, da = phi(alpha)
        evals += 1
        if not np.isfinite(fa) or fa > f0 + c1 * alpha * derphi0 or (not first and fa >= f_prev):
            return zoom(alpha_prev, f_prev, d_prev, alpha, fa)
        if abs(da) <= -c2 * derphi0:
            return _LineSearchResult(True, alpha, fa, ga, evals)
        if da >= 0.0:
            return zoom(alpha, fa, da, alpha_prev, f_prev)
        alpha_prev, f_prev, d_prev = alpha, fa, da
        alpha *= 2.0
        first = False
    return _LineSearchResult(False, 0.0, f0, None, evals)


def bfgs_minimize(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: OptimizerOptions | None = None,
    h0: np.ndarray | None = None,
) -> BfgsResult:
    """Minimize a smooth function, returning the best iterate and diagnostics.

    ``h0`` seeds the inverse-Hessian approximation (identity by default);
    passing the true inverse Hessian of a quadratic makes the first step
    exact.  The approximation is updated only when the curvature condition
    ``s'y > 1e-10 * ||s|| * ||y||`` holds; otherwise the update is skipped.
    Non-convergence (iteration cap or failed line search) is reported
    through the result status, never raised.
    """
    opts = options or OptimizerOptions()
    x = np.array(x0, dtype=float).copy()
    dim = x.size
    f = float(objective(x))
    g = np.asarray(gradient(x), dtype=float)
    n_fun = n_grad = 1
    if h0 is None:
        h = np.eye(dim)
        first_update = True
    else:
        h = np.array(h0, dtype=float).copy()
        first_update = False
    iterations = 0
    status = "max_iterations"

    while True:
        grad_norm = float(np.max(np.abs(g))) if dim else 0.0
        if np.isfinite(grad_norm) and grad_norm <= opts.grad_tol:
            status = "converged"
            break
        if iterations >= opts.max_iterations:
            status = "max_iterations"
            break
        direction = -(h @ g)
        derphi0 = float(g @ direction)
        if not np.isfinite(derphi0) or derphi0 >= 0.0:
            h = np.eye(dim)
            direction = -g
            derphi0 = float(g @ direction)
        ls = _wolfe_line_search(objective, gradient, x, direction, f, derphi0, opts)
        n_fun += ls.evals
        n_grad += ls.evals
        if not ls.ok:
            status = "line_search_failed"
            break
        s = ls.alpha * direction
        g_new = ls.g
        y = g_new - g
        sy = float(s @ y)
        if sy > CURVATURE_FLOOR * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                h *= sy / float(y @ y)
                first_update = False
            rho = 1.0 / sy
            hy = h @ y
            h -= rho * (np.outer(s, hy) + np.outer(hy, s))
            h += (rho * rho * float(y @ hy) + rho) * np.outer(s, s)
        x = x + s
        f = ls.f
        g = g_new
        iterations += 1

    return BfgsResult(
        x=x,
        fun=f,
        grad=g,
        grad_norm=float(np.max(np.abs(g))) if dim else 0.0,
        iterations=iterations,
        converged=status == "converged",
        status=status,
        n_fun_evals=n_fun,
        n_grad_evals=n_grad,
    )
