"""Two-step GMM estimation with optimal weighting and Wald inference.

Step 1 minimizes the quadratic form ``Q(beta) = G(beta)' W G(beta)`` with
the identity weighting; step 2 re-minimizes with ``W`` set to an
eigendecomposition pseudo-inverse of the clustered moment covariance
estimated at the first-step solution.  The parameter covariance is the
sandwich

    (J'WJ)^{-1} J'WSWJ (J'WJ)^{-1} / n

evaluated at the final estimate, which collapses to ``(J'S^{-1}J)^{-1}/n``
when ``W`` is the exact inverse of ``S``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import LongitudinalDataset, validate
from .design import Link, ModelSpec, MomentSystem, build_moment_system
from .errors import DataError, DimensionMismatch, SingularWeighting, Underidentified
from .moments import MomentContext, long_run_covariance
from .optimize import BfgsResult, OptimizerOptions, bfgs_minimize

Z_95 = 1.959964
_SQRT2 = math.sqrt(2.0)

EIGENVALUE_FLOOR_SCALE = 1e-10
RIDGE_SCALE = 1e-8
GRADIENT_PRECISION_FLOOR = 1e-5


@dataclass(frozen=True)
class WeightingDiagnostics:
    condition: float
    n_dropped: int
    ridged: bool


@dataclass
class GmmFit:
    """Estimates, sandwich covariance, and Wald inference from one fit."""

    param_names: tuple[str, ...]
    beta_hat: np.ndarray
    covariance: np.ndarray
    standard_errors: np.ndarray
    z_stats: np.ndarray
    p_values: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    objective_step1: float
    objective_step2: float
    j_stat: float
    n_moments: int
    n_params: int
    n_subjects: int
    converged: bool
    iterations: int
    weighting_condition: float


def gmm_objective(beta: np.ndarray, eval_context: MomentContext, w: np.ndarray) -> float:
    """Quadratic form G(beta)' W G(beta); nonnegative for PSD ``w``."""
    w = np.asarray(w, dtype=float)
    q = eval_context.n_conditions
    if w.shape != (q, q):
        raise DimensionMismatch(f"weighting matrix must be ({q}, {q}), got {w.shape}")
    g, _ = eval_context.moment_vector(beta)
    return float(g @ w @ g)


def objective_gradient(beta: np.ndarray, eval_context: MomentContext, w: np.ndarray) -> np.ndarray:
    """Analytic gradient of the quadratic form: 2 J' W G."""
    w = np.asarray(w, dtype=float)
    q = eval_context.n_conditions
    if w.shape != (q, q):
        raise DimensionMismatch(f"weighting matrix must be ({q}, {q}), got {w.shape}")
    g, _ = eval_context.moment_vector(beta)
    jac = eval_context.jacobian(beta)
    return 2.0 * jac.T @ (w @ g)


def weighting_from_covariance(
    s: np.ndarray, n_params: int
) -> tuple[np.ndarray, WeightingDiagnostics]:
    """Pseudo-invert the moment covariance for use as the weighting matrix.

    Eigenvalues below ``1e-10 * trace(S)/q`` are dropped.  If that leaves
    fewer than ``n_params`` usable directions, a ridge ``1e-8 * trace(S)/q``
    is added and the matrix inverted directly; if the covariance is still
    effectively rank-deficient the fit cannot proceed.
    """
    s = np.asarray(s, dtype=float)
    q = s.shape[0]
    trace = float(np.trace(s))
    if not np.isfinite(trace) or trace <= 0.0:
        raise SingularWeighting("moment covariance has nonpositive trace")
    evals, evecs = np.linalg.eigh((s + s.T) / 2.0)
    floor = EIGENVALUE_FLOOR_SCALE * trace / q
    keep = evals > floor
    n_dropped = int(q - keep.sum())
    if n_dropped > q - n_params:
        lam = RIDGE_SCALE * trace / q
        ridged = s + lam * np.eye(q)
        try:
            w = np.linalg.inv(ridged)
        except np.linalg.LinAlgError:
            raise SingularWeighting(
                "moment covariance remains singular after ridge regularization"
            ) from None
        if not np.all(np.isfinite(w)):
            raise SingularWeighting("regularized weighting matrix is not finite")
        cond = float((evals[-1] + lam) / (max(evals[0], 0.0) + lam))
        return (w + w.T) / 2.0, WeightingDiagnostics(cond, n_dropped, True)
    kept_vals = evals[keep]
    kept_vecs = evecs[:, keep]
    w = kept_vecs @ np.diag(1.0 / kept_vals) @ kept_vecs.T
    cond = float(kept_vals[-1] / kept_vals[0])
    return (w + w.T) / 2.0, WeightingDiagnostics(cond, n_dropped, False)


def score_equation_weighting(system: MomentSystem) -> np.ndarray:
    """Weighting that collapses stacked conditions into per-parameter scores.

    With selector ``A[m, r] = 1`` when condition m belongs to parameter r,
    the quadratic form under ``W = A A'`` equals ``||A'G(beta)||^2``: identity
    weighting on the p summed score equations.  Restricted to contemporaneous
    conditions of an identity-link model, its minimizer is exactly pooled
    least squares on the expanded design.
    """
    selector = np.zeros((system.n_conditions, system.n_params))
    for m, cond in enumerate(system.conditions):
        selector[m, cond.param_index] = 1.0
    return selector @ selector.T


def _make_objective(
    ctx: MomentContext, w: np.ndarray
) -> tuple[Callable[[np.ndarray], float], Callable[[np.ndarray], np.ndarray]]:
    # For the identity link the moment vector is affine in beta, so the
    # quadratic form reduces to beta'A beta + 2 b'beta + c with constant
    # pieces; evaluations then cost O(p^2) regardless of panel size.
    if ctx.link is Link.IDENTITY:
        g0, jac = ctx.affine()
        wj = w @ jac
        a = jac.T @ wj
        b = wj.T @ g0
        c = float(g0 @ w @ g0)

        def objective(beta: np.ndarray) -> float:
            return float(beta @ a @ beta + 2.0 * b @ beta + c)

        def gradient(beta: np.ndarray) -> np.ndarray:
            return 2.0 * (a @ beta + b)

        return objective, gradient

    # The optimizer evaluates the objective and gradient at the same points;
    # memoize the shared moment evaluation per parameter vector.
    cache: dict = {"key": None, "g": None}

    def moments_at(beta: np.ndarray) -> np.ndarray:
        key = beta.tobytes()
        if cache["key"] != key:
            cache["g"], _ = ctx.moment_vector(beta)
            cache["key"] = key
        return cache["g"]

    def objective(beta: np.ndarray) -> float:
        g = moments_at(np.asarray(beta, dtype=float))
        return float(g @ w @ g)

    def gradient(beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        g = moments_at(beta)
        return 2.0 * ctx.jacobian(beta).T @ (w @ g)

    return objective, gradient


def minimize_quadratic_form(
    ctx: MomentContext,
    w: np.ndarray,
    x0: np.ndarray,
    options: OptimizerOptions | None = None,
) -> BfgsResult:
    """Run BFGS on ``G(beta)' W G(beta)`` from ``x0`` for a fixed weighting.

    The objective is normalized by its value at ``x0`` before optimization:
    pseudo-inverse weightings can put the raw objective on a 1e6..1e12 scale,
    where an absolute gradient tolerance is meaningless.  The minimizer is
    unchanged; the reported objective value is de-normalized.
    """
    w = np.asarray(w, dtype=float)
    objective, gradient = _make_objective(ctx, w)
    x0 = np.asarray(x0, dtype=float)
    scale = float(objective(x0))
    if not np.isfinite(scale) or scale <= 1e-300:
        scale = 1.0
    # Seed the inverse Hessian with the Gauss-Newton curvature 2 J'WJ at x0
    # (exact for the identity link, where the objective is quadratic).
    jac = ctx.affine()[1] if ctx.link is Link.IDENTITY else ctx.jacobian(x0)
    curvature = 2.0 * jac.T @ w @ jac / scale
    h0 = np.linalg.pinv((curvature + curvature.T) / 2.0)
    result = bfgs_minimize(
        lambda beta: objective(beta) / scale,
        lambda beta: gradient(beta) / scale,
        x0,
        options,
        h0=h0,
    )
    # Pseudo-inverse weightings can have condition numbers ~1e8-1e12, which
    # puts the attainable gradient precision of W G products near 1e-8 of the
    # normalized scale.  A stalled line search with the gradient at that
    # floor is a converged solve, not a failure.
    opts = options or OptimizerOptions()
    if result.status == "line_search_failed" and result.grad_norm <= max(
        opts.grad_tol, GRADIENT_PRECISION_FLOOR
    ):
        result.status = "precision_floor"
        result.converged = True
    result.fun *= scale
    result.grad = result.grad * scale
    result.grad_norm *= scale
    return result


def starting_values(ctx: MomentContext) -> np.ndarray:
    """Least squares on the expanded design (identity link) or zeros (logit)."""
    if ctx.link is Link.LOGIT:
        return np.zeros(ctx.n_params)
    z_flat = ctx.z.reshape(-1, ctx.n_params)
    y_flat = ctx.y.reshape(-1)
    beta, *_ = np.linalg.lstsq(z_flat, y_flat, rcond=None)
    return beta


def wald_inference(
    beta_hat: np.ndarray, covariance: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Standard errors, z statistics, two-sided normal p-values, and 95% CIs.

    A zero standard error yields a zero-width interval with the p-value
    flagged as NaN.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    covariance = np.asarray(covariance, dtype=float)
    if covariance.shape != (beta_hat.size, beta_hat.size):
        raise DimensionMismatch("covariance shape does not match the estimate")
    se = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    z = np.full_like(beta_hat, np.nan)
    p = np.full_like(beta_hat, np.nan)
    nonzero = se > 0.0
    z[nonzero] = beta_hat[nonzero] / se[nonzero]
    p[nonzero] = np.array([math.erfc(abs(v) / _SQRT2) for v in z[nonzero]])
    lower = beta_hat - Z_95 * se
    upper = beta_hat + Z_95 * se
    return se, z, p, lower, upper


def two_step_fit(
    ds: LongitudinalDataset,
    spec: ModelSpec,
    options: OptimizerOptions | None = None,
    system: MomentSystem | None = None,
) -> GmmFit:
    """Fit the grouped-lag marginal model by two-step GMM.

    Raises :class:`Underidentified` when there are too few moment conditions
    or subjects, :class:`SingularWeighting` when the moment covariance is
    irreparably rank-deficient, and :class:`DataError` when the outcomes are
    incompatible with the link.  Optimizer non-convergence is reported via
    ``converged`` on the returned fit, with partial results intact.
    """
    violations = validate(ds, spec.outcome_kind)
    if violations:
        raise DataError("; ".join(violations))
    if system is None:
        system = build_moment_system(ds.n_times, spec)
    n, p, q = ds.n_subjects, spec.n_params, system.n_conditions
    if q < p:
        raise Underidentified(f"underidentified: {q} moment conditions for {p} parameters")
    if n <= p:
        raise Underidentified(
            f"underidentified: n={n} subjects for {p} parameters (need n > p)"
        )

    ctx = MomentContext(ds, spec, system)
    opts = options or OptimizerOptions()
    x0 = starting_values(ctx)

    step1 = minimize_quadratic_form(ctx, np.eye(q), x0, opts)
    _, gi1 = ctx.moment_vector(step1.x)
    s1 = long_run_covariance(gi1)
    w, weighting = weighting_from_covariance(s1, p)
    step2 = minimize_quadratic_form(ctx, w, step1.x, opts)

    beta = step2.x
    jac = ctx.jacobian(beta)
    _, gi2 = ctx.moment_vector(beta)
    s2 = long_run_covariance(gi2)
    bread_inner = jac.T @ w @ jac
    try:
        bread = np.linalg.inv(bread_inner)
    except np.linalg.LinAlgError:
        bread = np.linalg.pinv(bread_inner)
    meat = jac.T @ w @ s2 @ w @ jac
    covariance = bread @ meat @ bread / n
    covariance = (covariance + covariance.T) / 2.0

    se, z, pvals, lower, upper = wald_inference(beta, covariance)
    return GmmFit(
        param_names=spec.param_names(),
        beta_hat=beta,
        covariance=covariance,
        standard_errors=se,
        z_stats=z,
        p_values=pvals,
        ci_lower=lower,
        ci_upper=upper,
        objective_step1=step1.fun,
        objective_step2=step2.fun,
        j_stat=n * step2.fun,
        n_moments=q,
        n_params=p,
        n_subjects=n,
        converged=step1.converged and step2.converged,
        iterations=step1.iterations + step2.iterations,
        weighting_condition=weighting.condition,
    )


def fit_report_json(fit: GmmFit) -> str:
    """Serialize a fit to a JSON report."""
    payload = {
        "param_names": list(fit.param_names),
        "beta_hat": fit.beta_hat.tolist(),
        "standard_errors": fit.standard_errors.tolist(),
        "z_stats": fit.z_stats.tolist(),
        "p_values": fit.p_values.tolist(),
        "ci_lower": fit.ci_lower.tolist(),
        "ci_upper": fit.ci_upper.tolist(),
        "covariance": fit.covariance.tolist(),
        "objective_step1": fit.objective_step1,
        "objective_step2": fit.objective_step2,
        "j_stat": fit.j_stat,
        "n_moments": fit.n_moments,
        "n_params": fit.n_params,
        "n_subjects": fit.n_subjects,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "weighting_condition": fit.weighting_condition,
    }
    return json.dumps(payload, indent=2)


def fit_coefficients_csv(fit: GmmFit) -> str:
    """Coefficient table: param,estimate,se,z,p,ci_lo,ci_hi."""
    lines = ["param,estimate,se,z,p,ci_lo,ci_hi"]
    for r, name in enumerate(fit.param_names):
        fields = [
            name,
            repr(float(fit.beta_hat[r])),
            repr(float(fit.standard_errors[r])),
            repr(float(fit.z_stats[r])),
            repr(float(fit.p_values[r])),
            repr(float(fit.ci_lower[r])),
            repr(float(fit.ci_upper[r])),
        ]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
