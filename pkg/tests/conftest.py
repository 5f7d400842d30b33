import numpy as np
import pytest

from daverpg.algorithm import configure_steps, default_stepsizes
from daverpg.analysis import reference_solution
from daverpg.data.synth import LOGISTIC_SYNTHETIC, QUADRATIC_SUM, synth_problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def identity_problem():
    """Five 2-D quadratics with identity Hessians: x* is the mean of the centers"""
    return synth_problem(QUADRATIC_SUM, M=5, dim=2, seed=1, condition=1.0, center_spread=3.0)


@pytest.fixture(scope="session")
def quad_problem():
    """Five 4-D quadratics with spectrum in [1, 4]"""
    return synth_problem(QUADRATIC_SUM, M=5, dim=4, seed=2, condition=4.0, center_spread=1.0)


@pytest.fixture(scope="session")
def lasso_quad_problem():
    return synth_problem(QUADRATIC_SUM, M=3, dim=6, seed=3, condition=3.0, center_spread=1.0, lambda1=0.3)


@pytest.fixture(scope="session")
def l1_logistic_problem():
    """Small l1-logistic problem with mu = 0"""
    return synth_problem(
        LOGISTIC_SYNTHETIC, M=5, dim=20, seed=4, n_examples=200, density=0.2, lambda1=0.05, lambda2=0.0,
    )


def _reference(problem, tol=1e-12):
    return reference_solution(problem, configure_steps(default_stepsizes(problem)), tol=tol)


@pytest.fixture(scope="session")
def identity_reference(identity_problem):
    return _reference(identity_problem)


@pytest.fixture(scope="session")
def quad_reference(quad_problem):
    return _reference(quad_problem)


@pytest.fixture(scope="session")
def lasso_quad_reference(lasso_quad_problem):
    return _reference(lasso_quad_problem)


@pytest.fixture(scope="session")
def l1_logistic_reference(l1_logistic_problem):
    return _reference(l1_logistic_problem)
