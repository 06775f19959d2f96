import numpy as np
import pytest

from lagmm import (
    EstimatorSpec,
    Setting1Params,
    Setting2Params,
    Setting3Params,
    SettingGenerator,
    SpecError,
    gen_setting1,
    gen_setting2,
    gen_setting3,
    replicate_seed,
    report_to_csv,
    report_to_text,
    run_coverage_study,
    two_step_fit,
)
from lagmm.cli import benchmark_estimators

from dataclasses import replace


def test_setting1_deterministic():
    p = Setting1Params(n=50, seed=42)
    assert gen_setting1(p).equals(gen_setting1(p))
    assert not gen_setting1(p).equals(gen_setting1(replace(p, seed=43)))


def test_setting2_deterministic():
    p = Setting2Params(n=50, seed=42)
    assert gen_setting2(p).equals(gen_setting2(p))


def test_setting3_deterministic():
    p = Setting3Params(n=50, seed=42)
    assert gen_setting3(p).equals(gen_setting3(p))


def test_setting1_stationary_covariate_moments():
    ds = gen_setting1(Setting1Params(n=30000, seed=5))
    x = ds.covariate("x")
    assert np.allclose(x.var(axis=0), 4.0 / 3.0, atol=0.05)
    for t in range(1, 5):
        corr = np.corrcoef(x[:, t], x[:, t - 1])[0, 1]
        assert abs(corr - 0.5) < 0.02


def test_setting1_outcome_depends_on_available_lags_only():
    p = Setting1Params(n=2000, seed=6)
    ds = gen_setting1(p)
    x = ds.covariate("x")
    resid_t1 = ds.outcomes[:, 0] - p.gamma1 * x[:, 0]
    # the first-occasion residual is b + e, uncorrelated with the covariate
    assert abs(np.corrcoef(resid_t1, x[:, 0])[0, 1]) < 0.05
    resid_t3 = ds.outcomes[:, 2] - p.gamma1 * x[:, 2] - p.gamma2 * x[:, 1]
    assert abs(np.corrcoef(resid_t3, x[:, 2])[0, 1]) < 0.05


def test_setting2_feedback_correlation():
    ds = gen_setting2(Setting2Params(n=30000, seed=7))
    x = ds.covariate("x")
    y = ds.outcomes
    for t in range(1, 5):
        assert np.corrcoef(x[:, t], y[:, t - 1])[0, 1] > 0.05


def test_setting2_feedback_switched_off():
    ds = gen_setting2(Setting2Params(n=30000, gamma=0.0, kappa=0.0, seed=8))
    x = ds.covariate("x")
    y = ds.outcomes
    for t in range(1, 5):
        assert abs(np.corrcoef(x[:, t], y[:, t - 1])[0, 1]) < 0.02


def test_setting2_stationary_initialization_flag():
    p = Setting2Params(n=40000, seed=9, y_init="stationary")
    ds = gen_setting2(p)
    a = p.beta * p.gamma + p.kappa
    var_y = (p.beta**2 * p.var_v + p.var_u) / (1.0 - a**2)
    assert np.allclose(ds.outcomes.var(axis=0), var_y, rtol=0.06)


def test_setting3_reduces_to_setting1_bit_for_bit():
    base = Setting1Params(n=120, seed=99)
    degenerate = Setting3Params(n=120, seed=99, gamma3=0.0, gamma4=0.0, gamma5=0.0)
    assert gen_setting3(degenerate).equals(gen_setting1(base))


def test_setting3_lag_terms_change_outcomes_only():
    s1 = gen_setting1(Setting1Params(n=60, seed=100))
    s3 = gen_setting3(Setting3Params(n=60, seed=100))
    assert np.array_equal(s1.covariates, s3.covariates)
    assert not np.array_equal(s1.outcomes, s3.outcomes)
    # first occasion has no observable deep lags: identical outcomes there
    assert np.array_equal(s1.outcomes[:, 0], s3.outcomes[:, 0])


def test_param_validation():
    with pytest.raises(SpecError):
        Setting1Params(rho=1.0)
    with pytest.raises(SpecError):
        Setting1Params(var_b=0.0)
    with pytest.raises(SpecError):
        Setting2Params(kappa=1.5)
    with pytest.raises(SpecError):
        Setting2Params(y_init="bogus")


def test_replicate_seed_is_pure_and_distinct():
    a = replicate_seed(123, 0)
    b = replicate_seed(123, 0)
    c = replicate_seed(123, 1)
    assert a.generate_state(4).tolist() == b.generate_state(4).tolist()
    assert a.generate_state(4).tolist() != c.generate_state(4).tolist()


def small_study(reps=4, threads=1, seed=2024):
    generator = SettingGenerator(1, Setting1Params(n=60, var_b=1.0))
    estimators = benchmark_estimators(1, 5)[:2]
    return run_coverage_study(
        generator,
        estimators,
        {0: 1.0, 1: 1.0},
        reps=reps,
        master_seed=seed,
        threads=threads,
        setting="setting1",
    )


def test_coverage_study_bookkeeping():
    report = small_study()
    assert report.reps == 4
    for row in report.rows:
        assert row.n_converged + row.n_failed == 4
        if row.n_converged:
            assert 0.0 <= row.coverage <= 1.0
            assert row.avg_ci_length > 0.0
    assert report.row("lag1", 0).parameter == "x"
    with pytest.raises(KeyError):
        report.row("nope", 0)


def test_coverage_study_single_replicate_matches_direct_fit():
    generator = SettingGenerator(1, Setting1Params(n=60, var_b=1.0))
    estimators = benchmark_estimators(1, 5)[:1]
    report = run_coverage_study(
        generator, estimators, {0: 1.0}, reps=1, master_seed=7, setting="s"
    )
    ds = generator(replicate_seed(7, 0))
    fit = two_step_fit(ds, estimators[0].model, estimators[0].options)
    row = report.row("lag1", 0)
    assert row.coverage == float(fit.ci_lower[0] <= 1.0 <= fit.ci_upper[0])
    assert row.avg_ci_length == pytest.approx(float(fit.ci_upper[0] - fit.ci_lower[0]))


def test_coverage_study_reproducible():
    assert small_study() == small_study()


def test_coverage_study_threads_do_not_change_results():
    serial = small_study(reps=6, threads=1)
    parallel = small_study(reps=6, threads=2)
    assert serial == parallel


def test_coverage_study_requires_reps():
    with pytest.raises(SpecError):
        small_study(reps=0)


def test_report_serialization_formats():
    report = small_study()
    csv_text = report_to_csv(report)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "setting,estimator,parameter,coverage,avg_ci_length,n_converged,n_failed"
    assert len(lines) == 1 + len(report.rows)
    assert csv_text == report_to_csv(report)  # deterministic bytes
    text = report_to_text(report)
    assert "master_seed" in text and "lag1" in text


def test_estimator_spec_is_picklable():
    import pickle

    spec = benchmark_estimators(2, 5)[0]
    assert pickle.loads(pickle.dumps(spec)) == spec
    generator = SettingGenerator(2, Setting2Params())
    assert pickle.loads(pickle.dumps(generator)) == generator
