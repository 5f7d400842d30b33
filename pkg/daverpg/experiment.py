"""
Experiment runner: builds the problem a config describes, runs every
requested algorithm (and every repetition count of a sweep) on the same seed
and delay model, and writes trace CSV, report CSV and a manifest per run.
"""
import logging
import os
from typing import List, Optional

import numpy as np

from . import config as settings
from .algorithm import BUDGETED, DAVE_RPG, PIAG, RepetitionPolicy, configure_steps, default_stepsizes
from .algorithm import piag_reference_stepsize
from .analysis import ReferenceSolution, ReportBuilder, reference_solution, report
from .data.export import (
    MANIFEST_SUFFIX,
    REPORT_SUFFIX,
    TRACE_SUFFIX,
    write_manifest,
    write_report_csv,
    write_trace_csv,
)
from .data.libsvm import load_libsvm
from .data.synth import LIBSVM, LOGISTIC_SYNTHETIC, problem_digest, problem_from_dataset, synth_problem
from .errors import DaveError, RunError
from .problem import CompositeProblem
from .runtime import run_cluster
from .schemas import RUN, ExperimentConfig, RunManifest
from .simulator import (
    Trace,
    delays_from_trace,
    epoch_sequence,
    final_iterate,
    initial_locals,
    observed_max_delay,
    simulate,
    trace_digest,
)

logger = logging.getLogger(__name__)


def build_problem(cfg: ExperimentConfig) -> CompositeProblem:
    if cfg.problem == LIBSVM:
        dataset = load_libsvm(cfg.dataset, n_features=cfg.n_features)
        return problem_from_dataset(dataset, cfg.workers, lambda1=cfg.lambda1, lambda2=cfg.lambda2)
    return synth_problem(
        cfg.problem,
        M=cfg.workers,
        dim=cfg.n_features if cfg.problem == LOGISTIC_SYNTHETIC and cfg.n_features else cfg.dim,
        seed=cfg.seed,
        condition=cfg.condition,
        center_spread=cfg.center_spread,
        n_examples=cfg.n_examples,
        density=cfg.density,
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
    )


def _init_vector(cfg: ExperimentConfig, dim: int) -> Optional[np.ndarray]:
    if cfg.init is None:
        return None
    if len(cfg.init) == 1:
        return np.full(dim, cfg.init[0])
    return np.array(cfg.init, dtype=float)


def _run_id(algo: str, policy: RepetitionPolicy) -> str:
    if algo != DAVE_RPG:
        return algo
    if policy.kind == BUDGETED:
        return f"{algo}-budgeted"
    return f"{algo}-p{policy.p}"


def _execute(cfg, problem, reference, algo, policy, init, piag_gamma):
    """One run; returns (trace, final iterate, report)"""
    store = problem.dim <= settings.SNAPSHOT_DIM_LIMIT
    if cfg.mode == RUN:
        cluster = cfg.cluster(policy.p).model_copy(update={"store_snapshots": store})
        x, trace = run_cluster(problem, cluster, init=init)
        if not store:
            return trace, x, None
        return trace, x, report(trace, problem, reference)

    steps = configure_steps(reference.gammas)
    kwargs = dict(
        algo=algo, steps=steps, policy=policy, model=cfg.delay(), seed=cfg.seed,
        max_iters=cfg.budget_iters, max_time=cfg.budget_time, init=init, piag_gamma=piag_gamma,
    )
    if store:
        trace, state = simulate(problem, store_snapshots=True, **kwargs)
        return trace, final_iterate(problem, state), report(trace, problem, reference)

    # large problems: stream the report instead of keeping per-exchange vectors
    locals_ = initial_locals(problem, init) if algo == DAVE_RPG else None
    gamma_bar = steps.gamma_bar if algo == DAVE_RPG else None
    builder = ReportBuilder(problem, reference, gamma_bar, locals_)
    trace, state = simulate(problem, store_snapshots=False, observer=builder, **kwargs)
    return trace, final_iterate(problem, state), builder.finish(trace)


def _fill_manifest(manifest: RunManifest, trace: Trace, x, rep):
    manifest.iterations = len(trace)
    manifest.trace_digest = trace_digest(trace)
    if not trace.synchronous and len(trace):
        delays = delays_from_trace(trace)
        epochs = epoch_sequence(delays)
        manifest.max_delay = delays.max_delay
        manifest.average_delay_bound = delays.average_delay_bound
        manifest.mean_delay = delays.mean_delay
        manifest.epochs = len(epochs)
        manifest.epoch_boundaries = [int(b) for b in epochs.boundaries]
    else:
        manifest.epochs = len(trace)
    if x is not None:
        manifest.nonzero_fraction = float(np.count_nonzero(x)) / x.shape[0]
    if rep is not None:
        manifest.final_suboptimality = float(rep.suboptimality[-1])
        manifest.final_distance_sq = float(rep.distance_sq[-1])


def run_experiment(cfg: ExperimentConfig, reference: Optional[ReferenceSolution] = None) -> List[RunManifest]:
    """
    Run every (algorithm, repetition policy) pair of the config.

    A failing run still writes its manifest, flagged partial with the error,
    before the error is raised again.
    """
    problem = build_problem(cfg)
    digest = problem_digest(problem)
    init = _init_vector(cfg, problem.dim)
    if reference is None:
        reference = reference_solution(problem, configure_steps(default_stepsizes(problem)), tol=cfg.reference_tol)
    os.makedirs(cfg.out, exist_ok=True)
    logger.info(f"Experiment: problem {digest[:12]}, M={problem.M}, dim={problem.dim}, out={cfg.out}")

    manifests = []
    for algo in cfg.algorithms:
        policies = cfg.repetition_policies() if algo == DAVE_RPG else [RepetitionPolicy()]
        for policy in policies:
            run_id = _run_id(algo, policy)
            pairs = cfg.to_pairs()
            pairs["algorithms"] = algo
            if policy.kind != BUDGETED:
                pairs["reps"] = str(policy.p)
            manifest = RunManifest(
                run_id=run_id,
                algorithm=algo,
                mode=cfg.mode,
                p=None if policy.kind == BUDGETED else policy.p,
                seed=cfg.seed,
                problem_digest=digest,
                lambda1=cfg.lambda1,
                config=pairs,
            )
            piag_gamma = None
            if algo == PIAG:
                d = cfg.piag_delay
                if d is None:
                    d = observed_max_delay(problem.M, cfg.delay(), cfg.seed, cfg.budget_iters, cfg.budget_time)
                piag_gamma = piag_reference_stepsize(problem, d)
                manifest.piag_gamma = piag_gamma

            manifest_path = os.path.join(cfg.out, run_id + MANIFEST_SUFFIX)
            trace_path = os.path.join(cfg.out, run_id + TRACE_SUFFIX)
            report_path = os.path.join(cfg.out, run_id + REPORT_SUFFIX)
            try:
                trace, x, rep = _execute(cfg, problem, reference, algo, policy, init, piag_gamma)
            except RunError as e:
                manifest.partial = True
                manifest.error = str(e)
                if e.trace is not None:
                    _fill_manifest(manifest, e.trace, None, None)
                write_manifest(manifest, manifest_path)
                raise
            except DaveError as e:
                manifest.partial = True
                manifest.error = str(e)
                write_manifest(manifest, manifest_path)
                raise

            _fill_manifest(manifest, trace, x, rep)
            if rep is not None:
                write_trace_csv(rep, trace_path)
                write_report_csv(rep, report_path)
                manifest.trace_csv = trace_path
                manifest.report_csv = report_path
            write_manifest(manifest, manifest_path)
            logger.info(f"Run {run_id}: {manifest.iterations} exchanges, {manifest.epochs} epochs")
            manifests.append(manifest)
    return manifests
