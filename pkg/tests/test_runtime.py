import numpy as np
import pytest
from pydantic import ValidationError

from daverpg import runtime
from daverpg.algorithm import BUDGETED, configure_steps, sync_pg_round
from daverpg.analysis import aggregation_errors, replay_master_variable
from daverpg.errors import DimensionMismatchError, RunError
from daverpg.problem import L1, CompositeProblem, Regularizer, prox_reg, quadratic_term
from daverpg.runtime import run_cluster
from daverpg.schemas import ClusterConfig


def test_stop_rule_is_required():
    with pytest.raises(ValidationError):
        ClusterConfig(M=2)


def test_list_lengths_checked():
    with pytest.raises(ValidationError):
        ClusterConfig(M=2, max_iters=5, gammas="1.0")
    with pytest.raises(ValidationError):
        ClusterConfig(M=2, max_iters=5, slowdown="1,2,3")
    cfg = ClusterConfig(M=3, max_iters=5, slowdown="1, 0, 4")
    assert cfg.slowdown == [1.0, 0.0, 4.0]


def test_worker_count_must_match(quad_problem):
    with pytest.raises(DimensionMismatchError):
        run_cluster(quad_problem, ClusterConfig(M=2, max_iters=5))


def test_iteration_budget(quad_problem):
    x, trace = run_cluster(quad_problem, ClusterConfig(M=quad_problem.M, max_iters=40))
    assert len(trace) == 40
    assert x.shape == (quad_problem.dim,)
    assert set(trace.workers.tolist()) <= set(range(quad_problem.M))
    assert np.all(np.diff(trace.times) >= 0)


@pytest.mark.parametrize("run", range(8))
def test_runtime_converges_to_reference(identity_problem, identity_reference, run):
    cfg = ClusterConfig(M=identity_problem.M, reps=1 + run % 3, residual_tol=1e-10, max_iters=200_000)
    x, trace = run_cluster(identity_problem, cfg, init=-20.0)
    np.testing.assert_allclose(x, identity_reference.x_star, rtol=0, atol=1e-6)
    assert aggregation_errors(trace).max() <= 1e-10


def test_runtime_fixed_point(lasso_quad_problem, lasso_quad_reference):
    cfg = ClusterConfig(M=lasso_quad_problem.M, gammas=list(lasso_quad_reference.gammas), reps=2, max_iters=150)
    x, trace = run_cluster(lasso_quad_problem, cfg, init=lasso_quad_reference.shifted)
    assert trace.delta_norms.max() <= 1e-14
    np.testing.assert_allclose(x, lasso_quad_reference.x_star, rtol=0, atol=1e-12)


def test_slowed_worker_exchanges_less(quad_problem):
    cfg = ClusterConfig(M=quad_problem.M, max_iters=120, slowdown=[200, 0, 0, 0, 0], slowdown_unit=1e-3)
    _, trace = run_cluster(quad_problem, cfg)
    counts = np.bincount(trace.workers, minlength=quad_problem.M)
    assert counts[0] < counts[1:].min()


def test_budgeted_repetitions(quad_problem):
    cfg = ClusterConfig(M=quad_problem.M, rep_kind=BUDGETED, rep_budget=0.002, max_reps=5,
                        slowdown=[1] * quad_problem.M, max_iters=30)
    _, trace = run_cluster(quad_problem, cfg)
    assert trace.ps.min() >= 1
    assert trace.ps.max() <= 5


def test_wall_time_stop(quad_problem):
    cfg = ClusterConfig(M=quad_problem.M, wall_time=0.2, slowdown=[5] * quad_problem.M)
    _, trace = run_cluster(quad_problem, cfg)
    assert len(trace) >= 1
    assert trace.times[-1] < 5.0


def test_worker_failure_yields_partial_trace(quad_problem, monkeypatch):
    real = runtime.rpg_repetitions

    def flaky(worker, x_bar, term, reg):
        if worker.worker_id == 2 and worker.x.any():
            raise FloatingPointError("worker 2 diverged")
        yield from real(worker, x_bar, term, reg)

    monkeypatch.setattr(runtime, "rpg_repetitions", flaky)
    cfg = ClusterConfig(M=quad_problem.M, max_iters=10_000)
    with pytest.raises(RunError) as info:
        run_cluster(quad_problem, cfg, init=1.0)
    assert info.value.trace is not None
    assert info.value.trace.partial
    assert "worker 2" in str(info.value)


def test_recorded_adjustments_rebuild_the_master_variable(quad_problem):
    cfg = ClusterConfig(M=quad_problem.M, reps=2, max_iters=200)
    _, trace = run_cluster(quad_problem, cfg, init=3.0)
    np.testing.assert_allclose(replay_master_variable(trace), trace.x_bars, rtol=0, atol=1e-12)
    np.testing.assert_allclose(trace.deltas.sum(axis=0), trace.x_bars[-1] - trace.x_bar0, rtol=0, atol=1e-12)


def test_single_worker_runtime_is_sequential_proximal_gradient():
    term = quadratic_term(np.diag([1.0, 3.0, 2.0]), [2.0, -0.1, 0.6])
    problem = CompositeProblem(terms=[term], reg=Regularizer(kind=L1, lambda1=0.5))
    gamma = 0.4
    x, trace = run_cluster(problem, ClusterConfig(M=1, gammas=[gamma], max_iters=50), init=-1.5)
    assert len(trace) == 50

    steps = configure_steps([gamma])
    # the worker's first round starts from prox(x_bar^0)
    expected = prox_reg(problem.reg, np.full(3, -1.5), gamma)
    for _ in range(50):
        expected = sync_pg_round(problem, expected, steps)
    np.testing.assert_allclose(x, expected, rtol=0, atol=1e-12)
