"""
daverpg: asynchronous distributed proximal gradient with repetitions
Engine package: problems, the master/worker algorithm, the seeded event
simulator, the threaded runtime and convergence analysis
"""

__version__ = "1.0.0"

from .algorithm import DAVE_RPG, PIAG, SYNC_PG, RepetitionPolicy, configure_steps, default_stepsizes
from .analysis import ReportBuilder, reference_solution, report
from .data import load_libsvm, parse_libsvm, partition, problem_from_dataset, synth_problem
from .errors import DaveError
from .experiment import run_experiment
from .problem import CompositeProblem, evaluate, prox_reg, residual_norm
from .runtime import run_cluster
from .schemas import ClusterConfig, ExperimentConfig, RunManifest
from .simulator import DelayModel, delays_from_trace, epoch_sequence, simulate

__all__ = [
    'DAVE_RPG',
    'PIAG',
    'SYNC_PG',
    'RepetitionPolicy',
    'configure_steps',
    'default_stepsizes',
    'ReportBuilder',
    'reference_solution',
    'report',
    'load_libsvm',
    'parse_libsvm',
    'partition',
    'problem_from_dataset',
    'synth_problem',
    'DaveError',
    'run_experiment',
    'CompositeProblem',
    'evaluate',
    'prox_reg',
    'residual_norm',
    'run_cluster',
    'ClusterConfig',
    'ExperimentConfig',
    'RunManifest',
    'DelayModel',
    'delays_from_trace',
    'epoch_sequence',
    'simulate',
]
