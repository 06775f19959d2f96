"""Grouped-lag GMM estimation for longitudinal marginal models.

The package fits population-averaged models of a longitudinal outcome on
current and lagged values of time-dependent covariates, using stacked
moment conditions whose validity follows the covariate's relationship to
the outcome process (exogenous, past-dependent, or feedback).  Lags can be
estimated one coefficient each, pooled into a single coefficient, or
grouped into blocks that share a coefficient; estimation is two-step GMM
with BFGS minimization and clustered sandwich inference.
"""

from .data import (
    CsvSchema,
    LongitudinalDataset,
    OutcomeKind,
    emit_csv,
    load_csv,
    validate,
)
from .design import (
    CovariateClass,
    CovariateModel,
    LagGrouping,
    Link,
    ModelSpec,
    ModelSpecDecl,
    MomentCondition,
    MomentSystem,
    build_moment_system,
    classify_valid_pairs,
    expand_design,
    parse_model_spec,
    validity_matrix,
)
from .errors import (
    DataError,
    DimensionMismatch,
    DuplicateObservation,
    EmptyInput,
    EstimationError,
    InvalidDataset,
    LagmmError,
    LagOutOfRange,
    MissingCell,
    NonNumeric,
    SingularWeighting,
    SpecError,
    TooFewSubjects,
    Underidentified,
)
from .estimator import (
    GmmFit,
    fit_coefficients_csv,
    fit_report_json,
    gmm_objective,
    minimize_quadratic_form,
    objective_gradient,
    score_equation_weighting,
    two_step_fit,
    wald_inference,
    weighting_from_covariance,
)
from .moments import (
    MomentContext,
    MomentEvaluation,
    evaluate_moments,
    linear_predictor,
    long_run_covariance,
    mean_response,
    moment_jacobian,
    moment_vector,
)
from .optimize import BfgsResult, OptimizerOptions, bfgs_minimize
from .simulate import (
    EstimatorSpec,
    Setting1Params,
    Setting2Params,
    Setting3Params,
    SettingGenerator,
    SimulationReport,
    gen_setting1,
    gen_setting2,
    gen_setting3,
    replicate_seed,
    report_to_csv,
    report_to_text,
    run_coverage_study,
)

__version__ = "0.1.0"
