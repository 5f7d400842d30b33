"""
Threaded master/worker runtime.

One master thread (the caller) owns x_bar and the trace; M daemon worker
threads loop receive x_bar -> repetitions -> send adjustment. All interaction
goes through queues: one shared inbox for adjustments, one outbox per worker
for the x_bar replies. A worker has at most one adjustment in flight because
it blocks until the master answers.
"""
import logging
import queue
import threading
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .algorithm import (
    DAVE_RPG,
    AdjustmentMsg,
    RepetitionPolicy,
    WorkerState,
    configure_steps,
    default_stepsizes,
    master_apply,
    master_init,
    master_output,
    rpg_repetitions,
    worker_commit,
    worker_init,
)
from . import config as settings
from .errors import DimensionMismatchError, RunError
from .problem import CompositeProblem, Regularizer, SmoothTerm, residual_norm
from .schemas import ClusterConfig
from .simulator import Trace, TraceRecorder, initial_locals

logger = logging.getLogger(__name__)

JOIN_TIMEOUT = 5.0

STOP_ITERATIONS = "iterations"
STOP_RESIDUAL = "residual"
STOP_WALL_TIME = "wall-time"


@dataclass
class _WorkerFailure:
    worker_id: int
    error: BaseException


def _worker_loop(
    worker: WorkerState,
    term: SmoothTerm,
    reg: Regularizer,
    policy: RepetitionPolicy,
    sleep_per_gradient: float,
    replies: queue.Queue,
    inbox: queue.Queue,
    stop: threading.Event,
):
    try:
        while not stop.is_set():
            x_bar = replies.get()
            if x_bar is None:
                return
            started = time.perf_counter()
            limit = policy.max_reps if policy.budgeted else policy.repetitions(worker.worker_id)
            p = 0
            for delta, x_new in rpg_repetitions(worker, x_bar, term, reg):
                p += 1
                if sleep_per_gradient > 0:
                    time.sleep(sleep_per_gradient)
                if p >= limit:
                    break
                if policy.budgeted and time.perf_counter() - started >= policy.time_budget:
                    break
                if stop.is_set():
                    break
            inbox.put(AdjustmentMsg(worker_id=worker.worker_id, delta=delta, x_local=x_new, p=p))
            worker = worker_commit(worker, x_new, x_bar)
    except Exception as e:
        inbox.put(_WorkerFailure(worker_id=worker.worker_id, error=e))


def _stop_reason(cfg: ClusterConfig, problem, master, elapsed) -> Optional[str]:
    if cfg.max_iters is not None and master.k >= cfg.max_iters:
        return STOP_ITERATIONS
    if cfg.residual_tol is not None and master.k % cfg.residual_every == 0:
        if residual_norm(problem, master_output(master, problem.reg)) <= cfg.residual_tol:
            return STOP_RESIDUAL
    if cfg.wall_time is not None and elapsed >= cfg.wall_time:
        return STOP_WALL_TIME
    return None


def run_cluster(problem: CompositeProblem, cfg: ClusterConfig, init=None) -> Tuple[np.ndarray, Trace]:
    """
    Run DAve-RPG on M worker threads until the stop rule fires.

    Returns the output prox_{gamma_bar g}(x_bar) and the realized trace, in
    which sim_time is wall-clock seconds since start and k is the commit order.
    A failing worker stops the run and raises RunError with the partial trace.
    """
    if cfg.M != problem.M:
        raise DimensionMismatchError(f"cluster has {cfg.M} workers, problem has {problem.M} terms")
    steps = configure_steps(cfg.gammas if cfg.gammas is not None else default_stepsizes(problem))
    policy = cfg.repetition_policy()
    locals_ = initial_locals(problem, init)
    x_bar0 = steps.pis @ locals_
    master = master_init(x_bar0, steps)
    store = cfg.store_snapshots if cfg.store_snapshots is not None else problem.dim <= settings.SNAPSHOT_DIM_LIMIT
    recorder = TraceRecorder(DAVE_RPG, problem.M, problem.dim, steps.pis, steps.gamma_bar,
                             locals_, x_bar0, store)

    inbox: queue.Queue = queue.Queue()
    replies: List[queue.Queue] = [queue.Queue() for _ in range(problem.M)]
    stop = threading.Event()
    threads = []
    for i in range(problem.M):
        factor = cfg.slowdown[i] if cfg.slowdown else 0.0
        thread = threading.Thread(
            target=_worker_loop,
            args=(worker_init(i, steps, locals_[i], x_bar0), problem.terms[i], problem.reg, policy,
                  factor * cfg.slowdown_unit, replies[i], inbox, stop),
            name=f"dave-worker-{i}",
            daemon=True,
        )
        threads.append(thread)

    logger.info(f"Starting cluster run: M={problem.M}, dim={problem.dim}, policy={policy.kind}")
    started = time.perf_counter()
    for i, thread in enumerate(threads):
        replies[i].put(x_bar0.copy())
        thread.start()

    reason = None
    failure = None
    try:
        while reason is None:
            elapsed = time.perf_counter() - started
            timeout = None if cfg.wall_time is None else max(cfg.wall_time - elapsed, 0.0)
            try:
                msg = inbox.get(timeout=timeout)
            except queue.Empty:
                reason = STOP_WALL_TIME
                break
            if isinstance(msg, _WorkerFailure):
                failure = msg
                break
            master = master_apply(master, msg)
            recorder.append(msg.worker_id, time.perf_counter() - started, msg.p, msg.delta,
                            master.x_bar, msg.x_local)
            reason = _stop_reason(cfg, problem, master, time.perf_counter() - started)
            if reason is None:
                replies[msg.worker_id].put(master.x_bar.copy())
    finally:
        stop.set()
        for reply in replies:
            reply.put(None)
        for thread in threads:
            thread.join(timeout=JOIN_TIMEOUT)

    late = 0
    while True:
        try:
            leftover = inbox.get_nowait()
        except queue.Empty:
            break
        if isinstance(leftover, AdjustmentMsg):
            late += 1
        else:
            logger.warning(f"Worker {leftover.worker_id} failed after the stop: {leftover.error}")
    if late:
        logger.warning(f"Discarded {late} adjustments that arrived after the stop")

    if failure is not None:
        logger.error(f"Worker {failure.worker_id} failed: {failure.error}")
        raise RunError(
            f"worker {failure.worker_id} failed after {master.k} commits: {failure.error}",
            trace=recorder.build(partial=True),
        ) from failure.error

    logger.info(f"Cluster run stopped ({reason}) after {master.k} commits")
    return master_output(master, problem.reg), recorder.build()
