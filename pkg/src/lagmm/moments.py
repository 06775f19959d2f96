"""Mean model, empirical moment vector, analytic Jacobian, and long-run covariance.

Each moment condition (block B of covariate j, derivative time s, residual
time t) contributes, for subject i,

    d_is * (Y_it - mu_it)

where ``d_is`` is the derivative of the modeled mean at time s with respect
to the block coefficient: the block regressor for the identity link, times
``mu_is (1 - mu_is)`` for the logit link.  Intercept conditions use s == t
with base regressor 1.  The sample moment vector G averages the per-subject
contributions; everything is evaluated at the current parameter vector.

Per-subject contributions may be computed in any order and reduced by
summation; this module reduces sequentially over the subject axis, which is
the bit-reproducible reference order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LongitudinalDataset
from .design import Link, ModelSpec, MomentSystem, build_moment_system, expand_design
from .errors import DimensionMismatch, TooFewSubjects

ETA_CLAMP = 700.0
MU_EPS = 1e-12


def linear_predictor(row: np.ndarray, beta: np.ndarray) -> float:
    """Dot product of one regressor row with the parameter vector."""
    row = np.asarray(row, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if row.shape != beta.shape:
        raise DimensionMismatch(f"regressor row {row.shape} vs beta {beta.shape}")
    return float(row @ beta)


def mean_response(eta, link: Link):
    """Mean of the outcome at linear predictor ``eta``.

    Identity returns ``eta``.  Logit returns a value in (0, 1): the
    predictor is clamped to [-700, 700] before exponentiation so extreme
    arguments saturate without overflow.
    """
    if link is Link.IDENTITY:
        return eta
    eta = np.clip(np.asarray(eta, dtype=float), -ETA_CLAMP, ETA_CLAMP)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def mean_variance_factor(mu: np.ndarray) -> np.ndarray:
    """mu (1 - mu) with mu clamped away from {0, 1} to keep the factor positive."""
    mu = np.clip(mu, MU_EPS, 1.0 - MU_EPS)
    return mu * (1.0 - mu)


class MomentContext:
    """Precomputed arrays for fast repeated moment evaluation on one fit.

    Immutable after construction; safe to share across threads.
    """

    def __init__(
        self,
        ds: LongitudinalDataset,
        spec: ModelSpec,
        system: MomentSystem | None = None,
    ):
        if system is None:
            system = build_moment_system(ds.n_times, spec)
        self.spec = spec
        self.system = system
        self.link = spec.link
        self.z = expand_design(ds, spec)  # (n, T, p)
        self.y = np.asarray(ds.outcomes, dtype=float)
        self.n, self.n_times, self.n_params = self.z.shape
        self.n_conditions = system.n_conditions
        # 0-based indices per condition: derivative time, residual time, parameter.
        self.s_idx = np.array([c.s - 1 for c in system.conditions], dtype=np.intp)
        self.t_idx = np.array([c.t - 1 for c in system.conditions], dtype=np.intp)
        self.r_idx = np.array([c.param_index for c in system.conditions], dtype=np.intp)
        # Base derivative regressor per (subject, condition): the block
        # regressor at the derivative time (1 for intercept conditions).
        self.d_base = self.z[:, self.s_idx, self.r_idx]
        self._affine: tuple[np.ndarray, np.ndarray] | None = None
        self._z_at_t: np.ndarray | None = None
        self._z_at_s: np.ndarray | None = None

    def _check_beta(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_params,):
            raise DimensionMismatch(f"beta must have shape ({self.n_params},), got {beta.shape}")
        return beta

    def mean_matrix(self, beta: np.ndarray) -> np.ndarray:
        """Modeled mean mu[i, t] at the given parameter vector."""
        beta = self._check_beta(beta)
        eta = self.z @ beta
        return mean_response(eta, self.link)

    def moment_vector(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (G, g_i): the averaged moment vector and per-subject rows."""
        beta = self._check_beta(beta)
        mu = self.mean_matrix(beta)
        residual = self.y - mu
        d = self.d_base
        if self.link is Link.LOGIT:
            w = mean_variance_factor(mu)
            d = d * w[:, self.s_idx]
        gi = d * residual[:, self.t_idx]
        return gi.mean(axis=0), gi

    def jacobian(self, beta: np.ndarray) -> np.ndarray:
        """Analytic (q, p) derivative of the moment vector in beta."""
        beta = self._check_beta(beta)
        if self._z_at_t is None:
            self._z_at_t = self.z[:, self.t_idx, :]  # (n, q, p)
        zt = self._z_at_t
        if self.link is Link.IDENTITY:
            return -np.einsum("im,imr->mr", self.d_base, zt) / self.n
        mu = self.mean_matrix(beta)
        w = mean_variance_factor(mu)
        residual = self.y - mu
        if self._z_at_s is None:
            self._z_at_s = self.z[:, self.s_idx, :]
        zs = self._z_at_s
        w_s = w[:, self.s_idx]
        # d/dbeta of [c w_s r_t]: chain rule through the variance factor at s
        # and the residual at t.
        a = self.d_base * w_s * (1.0 - 2.0 * np.clip(mu, MU_EPS, 1 - MU_EPS))[:, self.s_idx]
        a = a * residual[:, self.t_idx]
        b = self.d_base * w_s * w[:, self.t_idx]
        return (np.einsum("im,imr->mr", a, zs) - np.einsum("im,imr->mr", b, zt)) / self.n

    def affine(self) -> tuple[np.ndarray, np.ndarray]:
        """For the identity link, the exact representation G(beta) = G0 + J beta."""
        if self.link is not Link.IDENTITY:
            raise ValueError("affine representation exists only for the identity link")
        if self._affine is None:
            zero = np.zeros(self.n_params)
            g0, _ = self.moment_vector(zero)
            self._affine = (g0, self.jacobian(zero))
        return self._affine


def moment_vector(
    beta: np.ndarray,
    ds: LongitudinalDataset,
    system: MomentSystem,
    spec: ModelSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (G, g_i) for the given dataset, system, and spec."""
    return MomentContext(ds, spec, system).moment_vector(beta)


@dataclass(frozen=True)
class MomentEvaluation:
    """Everything the estimator consumes at one parameter value.

    ``g`` averages the per-subject rows ``gi``; ``s`` is the clustered
    long-run covariance of the moment vector (symmetric PSD).
    """

    g: np.ndarray          # (q,)
    gi: np.ndarray         # (n, q)
    jacobian: np.ndarray   # (q, p)
    s: np.ndarray          # (q, q)


def evaluate_moments(
    beta: np.ndarray,
    ds: LongitudinalDataset,
    system: MomentSystem,
    spec: ModelSpec,
) -> MomentEvaluation:
    """Bundle the moment vector, per-subject rows, Jacobian, and covariance."""
    ctx = MomentContext(ds, spec, system)
    g, gi = ctx.moment_vector(beta)
    return MomentEvaluation(g, gi, ctx.jacobian(beta), long_run_covariance(gi))


def moment_jacobian(
    beta: np.ndarray,
    ds: LongitudinalDataset,
    system: MomentSystem,
    spec: ModelSpec,
) -> np.ndarray:
    """Evaluate the analytic (q, p) moment Jacobian."""
    return MomentContext(ds, spec, system).jacobian(beta)


def long_run_covariance(gi: np.ndarray) -> np.ndarray:
    """Clustered covariance of the moment vector: (1/n) sum_i (g_i - gbar)(g_i - gbar)'.

    Subjects are the independent clusters; dependence within a subject is
    arbitrary.  Symmetric PSD by construction.
    """
    gi = np.asarray(gi, dtype=float)
    if gi.ndim != 2:
        raise DimensionMismatch("per-subject contributions must be an (n, q) matrix")
    n = gi.shape[0]
    if n < 2:
        raise TooFewSubjects("covariance estimation requires at least 2 subjects")
    centered = gi - gi.mean(axis=0)
    s = centered.T @ centered / n
    return (s + s.T) / 2.0
