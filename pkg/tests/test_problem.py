from decimal import Decimal, localcontext

import numpy as np
import pytest
from scipy import sparse

from daverpg.errors import DimensionMismatchError, InvalidParameterError
from daverpg.problem import (
    L1,
    ZERO,
    CompositeProblem,
    Regularizer,
    estimate_constants,
    evaluate,
    full_gradient,
    grad_smooth,
    logistic_term,
    min_norm_subgradient,
    prox_reg,
    quadratic_term,
    residual_norm,
    smooth_value,
)


def test_quadratic_gradient_is_exact():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = np.array([1.0, -3.0])
    term = quadratic_term(H, c)
    x = np.array([0.25, 4.0])
    np.testing.assert_array_equal(grad_smooth(term, x), H @ (x - c))


def test_quadratic_constants_are_extreme_eigenvalues():
    H = np.diag([0.5, 3.0, 7.0])
    mu, L = estimate_constants(quadratic_term(H, np.zeros(3)))
    assert mu == pytest.approx(0.5)
    assert L == pytest.approx(7.0)


def test_quadratic_value_against_decimal_oracle():
    H = [[2.0, 0.25], [0.25, 1.5]]
    c = [0.1, -0.7]
    x = [1.3, 2.9]
    term = quadratic_term(H, c)
    with localcontext() as ctx:
        ctx.prec = 50
        d = [Decimal(xi) - Decimal(ci) for xi, ci in zip(x, c)]
        exact = Decimal("0.5") * sum(
            d[i] * Decimal(H[i][j]) * d[j] for i in range(2) for j in range(2)
        )
    assert smooth_value(term, x) == pytest.approx(float(exact), rel=1e-14)


def test_logistic_gradient_matches_finite_differences(rng):
    A = sparse.random(30, 6, density=0.5, format="csr", random_state=1)
    b = np.where(rng.uniform(size=30) < 0.5, -1.0, 1.0)
    term = logistic_term(A, b, lambda2=0.1)
    x = rng.standard_normal(6)
    h = 1e-6
    numeric = np.array([
        (smooth_value(term, x + h * e) - smooth_value(term, x - h * e)) / (2 * h) for e in np.eye(6)
    ])
    np.testing.assert_allclose(grad_smooth(term, x), numeric, rtol=1e-5, atol=1e-7)


def test_logistic_mu_is_ridge_weight():
    A = sparse.random(20, 5, density=0.4, format="csr", random_state=2)
    b = np.ones(20)
    term = logistic_term(A, b, lambda2=0.37)
    mu, L = estimate_constants(term)
    assert mu == 0.37
    assert L > mu


def test_logistic_L_bounds_curvature():
    A = sparse.random(40, 8, density=0.3, format="csr", random_state=3)
    term = logistic_term(A, -np.ones(40))
    exact = np.linalg.eigvalsh((A.T @ A).toarray())[-1] / 4.0
    assert term.L >= exact
    assert term.L <= exact * 1.02


def test_logistic_rejects_bad_labels():
    with pytest.raises(InvalidParameterError):
        logistic_term(np.eye(2), [1.0, 0.0])


def test_prox_soft_thresholds():
    reg = Regularizer(kind=L1, lambda1=1.0)
    np.testing.assert_array_equal(prox_reg(reg, [3.0, -0.5, 1.0, -4.0], 1.0), [2.0, 0.0, 0.0, -3.0])


def test_prox_zero_is_identity_copy():
    v = np.array([1.0, -2.0])
    out = prox_reg(Regularizer(kind=ZERO), v, 0.3)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_prox_rejects_nonpositive_step():
    with pytest.raises(InvalidParameterError):
        prox_reg(Regularizer(), [1.0], 0.0)


def test_min_norm_subgradient_at_zero_absorbs_small_gradient():
    term = quadratic_term(np.eye(2), [0.2, -3.0])
    problem = CompositeProblem(terms=[term], reg=Regularizer(kind=L1, lambda1=1.0))
    # grad at 0 is (-0.2, 3.0): first coordinate absorbed, second shrunk to 2.0
    np.testing.assert_allclose(min_norm_subgradient(problem, np.zeros(2)), [0.0, 2.0])


def test_min_norm_subgradient_vanishes_at_lasso_solution():
    term = quadratic_term(np.eye(1), [3.0])
    problem = CompositeProblem(terms=[term], reg=Regularizer(kind=L1, lambda1=1.0))
    assert residual_norm(problem, np.array([2.0])) == pytest.approx(0.0, abs=1e-15)


def test_full_gradient_averages_terms():
    t1 = quadratic_term(np.eye(2), [1.0, 1.0])
    t2 = quadratic_term(2 * np.eye(2), [-1.0, 0.0])
    problem = CompositeProblem(terms=[t1, t2])
    x = np.array([0.5, 0.5])
    expected = 0.5 * ((x - [1.0, 1.0]) + 2 * (x - [-1.0, 0.0]))
    np.testing.assert_allclose(full_gradient(problem, x), expected)


def test_evaluate_adds_regularizer():
    term = quadratic_term(np.eye(2), [0.0, 0.0])
    problem = CompositeProblem(terms=[term], reg=Regularizer(kind=L1, lambda1=0.5))
    assert evaluate(problem, [1.0, -2.0]) == pytest.approx(0.5 * 5.0 + 0.5 * 3.0)


def test_dimension_mismatch_is_reported():
    term = quadratic_term(np.eye(3), np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        grad_smooth(term, np.zeros(2))
    with pytest.raises(DimensionMismatchError):
        CompositeProblem(terms=[term, quadratic_term(np.eye(2), np.zeros(2))])


@pytest.mark.parametrize("mu,L", [(2.0, 1.0), (-0.1, 1.0), (0.0, 0.0)])
def test_invalid_constants_rejected(mu, L):
    with pytest.raises(InvalidParameterError):
        quadratic_term(np.eye(2), np.zeros(2), mu=mu, L=L)


def test_negative_lambda1_rejected():
    with pytest.raises(InvalidParameterError):
        Regularizer(kind=L1, lambda1=-1.0)


@pytest.mark.parametrize("step", [0.1, 1.0, 3.0])
def test_prox_minimizes_its_objective(rng, step):
    reg = Regularizer(kind=L1, lambda1=0.7)
    v = rng.normal(scale=2.0, size=8)
    z = prox_reg(reg, v, step)

    def objective(y):
        return reg.value(y) + np.sum((y - v) ** 2) / (2 * step)

    best = objective(z)
    for _ in range(50):
        assert best <= objective(z + rng.normal(scale=0.1, size=8)) + 1e-15


def _random_terms(rng):
    H = rng.normal(size=(5, 5))
    yield quadratic_term(H @ H.T + 0.5 * np.eye(5), rng.normal(size=5))
    A = sparse.random(40, 5, density=0.6, format="csr", random_state=int(rng.integers(1000)))
    yield logistic_term(A, np.where(rng.uniform(size=40) < 0.5, -1.0, 1.0), lambda2=0.2)


def test_gradient_step_is_nonexpansive(rng):
    for _ in range(10):
        for term in _random_terms(rng):
            gamma = 2.0 / (term.mu + term.L)
            contraction = (term.L - term.mu) / (term.L + term.mu)
            for _ in range(20):
                x, y = rng.normal(scale=3.0, size=(2, 5))
                tx = x - gamma * grad_smooth(term, x)
                ty = y - gamma * grad_smooth(term, y)
                assert np.linalg.norm(tx - ty) <= contraction * np.linalg.norm(x - y) * (1 + 1e-10)


def test_min_norm_subgradient_is_the_smallest_selection(rng):
    lam = 0.8
    terms = [quadratic_term(np.diag([1.0, 2.0, 0.5, 3.0]), rng.normal(size=4)) for _ in range(3)]
    problem = CompositeProblem(terms=terms, reg=Regularizer(kind=L1, lambda1=lam))
    x = np.array([0.0, 1.2, 0.0, -0.4])
    grad = full_gradient(problem, x)
    chosen = min_norm_subgradient(problem, x)
    # the result is itself a subgradient
    zero = x == 0
    np.testing.assert_allclose(chosen[~zero], grad[~zero] + lam * np.sign(x[~zero]))
    assert np.all(np.abs(chosen[zero] - grad[zero]) <= lam + 1e-15)
    for _ in range(1000):
        signs = np.where(zero, rng.uniform(-1.0, 1.0, size=4), np.sign(x))
        assert np.linalg.norm(chosen) <= np.linalg.norm(grad + lam * signs) + 1e-15


def test_gradients_match_finite_differences_on_random_points(rng):
    h = 1e-6
    pairs = 0
    while pairs < 100:
        for term in _random_terms(rng):
            x = rng.normal(size=5)
            numeric = np.array([
                (smooth_value(term, x + h * e) - smooth_value(term, x - h * e)) / (2 * h) for e in np.eye(5)
            ])
            exact = grad_smooth(term, x)
            np.testing.assert_allclose(exact, numeric, rtol=1e-5, atol=1e-5 * (1 + np.abs(exact).max()))
            pairs += 1
