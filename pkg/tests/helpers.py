"""Shared builders for the test suite."""

import numpy as np

from lagmm import (
    CovariateClass,
    CovariateModel,
    LagGrouping,
    Link,
    LongitudinalDataset,
    ModelSpec,
    expand_design,
)
from lagmm.moments import mean_response


def single_covariate_spec(blocks, klass=CovariateClass.TYPE_I, link=Link.IDENTITY,
                          intercept=False, name="x"):
    return ModelSpec(link, intercept, ((name, CovariateModel(klass, LagGrouping.of(*blocks))),))


def random_panel(rng, n, n_times, n_covariates=1):
    """Gaussian covariates and outcomes with no particular structure."""
    covs = rng.normal(0.0, 1.0, (n_covariates, n, n_times))
    y = rng.normal(0.0, 1.0, (n, n_times))
    names = tuple(f"x{j+1}" for j in range(n_covariates)) if n_covariates > 1 else ("x",)
    return LongitudinalDataset(y, covs, names)


def exact_fit_panel(rng, n, n_times, spec, beta):
    """Panel whose outcomes equal the modeled mean exactly (zero residuals)."""
    covs = rng.normal(0.0, 1.0, (len(spec.covariates), n, n_times))
    names = tuple(name for name, _ in spec.covariates)
    shell = LongitudinalDataset(np.zeros((n, n_times)), covs, names)
    z = expand_design(shell, spec)
    eta = z @ np.asarray(beta, dtype=float)
    mu = mean_response(eta, spec.link)
    if spec.link is Link.LOGIT:
        raise ValueError("exact-fit outcomes only make sense for the identity link")
    return LongitudinalDataset(mu, covs, names)


def logistic_panel(rng, n, n_times, spec, beta):
    """Binary panel with the modeled logistic marginal mean, independent draws."""
    covs = rng.normal(0.0, 1.0, (len(spec.covariates), n, n_times))
    names = tuple(name for name, _ in spec.covariates)
    shell = LongitudinalDataset(np.zeros((n, n_times)), covs, names)
    z = expand_design(shell, spec)
    mu = mean_response(z @ np.asarray(beta, dtype=float), Link.LOGIT)
    y = (rng.random((n, n_times)) < mu).astype(float)
    return LongitudinalDataset(y, covs, names)
