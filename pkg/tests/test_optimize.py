import numpy as np
import pytest

from lagmm import OptimizerOptions, SpecError, bfgs_minimize


def quadratic(center):
    center = np.asarray(center, dtype=float)

    def f(x):
        return float(np.sum((x - center) ** 2))

    def g(x):
        return 2.0 * (x - center)

    return f, g


def rosenbrock(x):
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


def rosenbrock_grad(x):
    return np.array(
        [
            -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
            200.0 * (x[1] - x[0] ** 2),
        ]
    )


def test_exact_quadratic_converges_in_three_iterations():
    rng = np.random.default_rng(0)
    for _ in range(5):
        center = rng.normal(0, 3, 4)
        f, g = quadratic(center)
        res = bfgs_minimize(f, g, rng.normal(0, 5, 4))
        assert res.converged
        assert res.iterations <= 3
        assert np.max(np.abs(res.x - center)) < 1e-8


def test_rosenbrock_standard_start():
    res = bfgs_minimize(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]))
    assert res.converged
    assert np.max(np.abs(res.x - 1.0)) < 1e-6


def test_iteration_cap_returns_best_iterate():
    x0 = np.array([-1.2, 1.0])
    res = bfgs_minimize(
        rosenbrock, rosenbrock_grad, x0, OptimizerOptions(max_iterations=1)
    )
    assert not res.converged
    assert res.status == "max_iterations"
    assert res.iterations == 1
    assert res.fun <= rosenbrock(x0)  # Wolfe search guarantees descent


def test_unbounded_objective_fails_line_search():
    res = bfgs_minimize(
        lambda x: float(-np.sum(x)),
        lambda x: -np.ones_like(x),
        np.zeros(3),
    )
    assert not res.converged
    assert res.status == "line_search_failed"


def test_already_optimal_start():
    f, g = quadratic([1.0, -2.0])
    res = bfgs_minimize(f, g, np.array([1.0, -2.0]))
    assert res.converged
    assert res.iterations == 0


def test_seeded_inverse_hessian_one_step():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 1, (3, 3))
    h_mat = a @ a.T + 3.0 * np.eye(3)  # Hessian of f is 2*h_mat... use f = x'Hx
    center = rng.normal(0, 1, 3)

    def f(x):
        d = x - center
        return float(d @ h_mat @ d)

    def g(x):
        return 2.0 * h_mat @ (x - center)

    res = bfgs_minimize(f, g, rng.normal(0, 5, 3), h0=np.linalg.inv(2.0 * h_mat))
    assert res.converged
    assert res.iterations == 1
    assert np.max(np.abs(res.x - center)) < 1e-10


def test_descent_on_ill_conditioned_quadratic():
    diag = np.array([1.0, 1e4, 1e8])
    center = np.array([0.5, -0.25, 0.125])

    def f(x):
        return float(np.sum(diag * (x - center) ** 2))

    def g(x):
        return 2.0 * diag * (x - center)

    res = bfgs_minimize(f, g, np.zeros(3), OptimizerOptions(max_iterations=200, grad_tol=1e-6))
    assert res.fun < f(np.zeros(3)) * 1e-10


def test_options_validation():
    with pytest.raises(SpecError):
        OptimizerOptions(c1=0.5, c2=0.1)
    with pytest.raises(SpecError):
        OptimizerOptions(grad_tol=0.0)
    with pytest.raises(SpecError):
        OptimizerOptions(max_iterations=0)
