"""
DAve-RPG master/worker state machines and the PIAG / synchronous PG baselines.

The master keeps x_bar, the weighted average of the workers' latest local
parameters, and only ever adds the adjustments the workers send. A worker
receives x_bar, runs p proximal-gradient repetitions on its own smooth term,
and answers with the weighted difference between its new and old parameter.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError
from .problem import CompositeProblem, Regularizer, SmoothTerm, grad_smooth, prox_reg

logger = logging.getLogger(__name__)

DAVE_RPG = "dave-rpg"
PIAG = "piag"
SYNC_PG = "sync-pg"
ALGORITHMS = (DAVE_RPG, PIAG, SYNC_PG)

FIXED = "fixed"
PER_WORKER = "per-worker"
BUDGETED = "budgeted"

# gamma_i = CONVEX_STEP_FRACTION / L_i when mu_i = 0
CONVEX_STEP_FRACTION = 1.8


@dataclass(frozen=True, eq=False)
class StepConfig:
    """Local stepsizes gamma_i, contribution weights pi_i and master stepsize gamma_bar"""
    gammas: np.ndarray
    pis: np.ndarray
    gamma_bar: float

    @property
    def M(self) -> int:
        return self.gammas.shape[0]


def configure_steps(gammas: Sequence[float]) -> StepConfig:
    """
    pi_i = (1 / gamma_i) / sum_j (1 / gamma_j) and gamma_bar = M / sum_j (1 / gamma_j),
    so that pi_i * gamma_i = gamma_bar / M for every worker.
    """
    gammas = np.array(gammas, dtype=float).ravel()
    if gammas.size == 0:
        raise InvalidParameterError("at least one stepsize is required")
    if not np.all(np.isfinite(gammas)) or np.any(gammas <= 0):
        raise InvalidParameterError(f"stepsizes must be positive and finite, got {gammas.tolist()}")
    inverse = 1.0 / gammas
    total = inverse.sum()
    pis = inverse / total
    gamma_bar = gammas.size / total
    gammas.setflags(write=False)
    pis.setflags(write=False)
    return StepConfig(gammas=gammas, pis=pis, gamma_bar=float(gamma_bar))


def strongly_convex_step_bound(mu: float, L: float) -> float:
    """Upper end of the closed range (0, 2 / (mu + L)] used when mu > 0"""
    return 2.0 / (mu + L)


def convex_step_bound(L: float) -> float:
    """Upper end of the open range (0, 2 / L) used in the general convex case"""
    return 2.0 / L


def stepsize_admissible(gamma: float, mu: float, L: float) -> bool:
    if gamma <= 0:
        return False
    if mu > 0:
        return gamma <= strongly_convex_step_bound(mu, L)
    return gamma < convex_step_bound(L)


def default_stepsizes(problem: CompositeProblem) -> np.ndarray:
    """Largest theoretically sanctioned local stepsizes"""
    gammas = []
    for term in problem.terms:
        if term.mu > 0:
            gammas.append(strongly_convex_step_bound(term.mu, term.L))
        else:
            gammas.append(CONVEX_STEP_FRACTION / term.L)
    return np.array(gammas)


@dataclass(frozen=True)
class RepetitionPolicy:
    """
    How many local repetitions p a worker runs before exchanging.

    fixed:      the same p for every round
    per-worker: p_i for worker i
    budgeted:   repeat while accumulated compute time < time_budget,
                at least once and at most max_reps times
    """
    kind: str = FIXED
    p: int = 1
    per_worker: Tuple[int, ...] = ()
    time_budget: float = 0.0
    max_reps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "per_worker", tuple(int(p) for p in self.per_worker))
        if self.kind not in (FIXED, PER_WORKER, BUDGETED):
            raise InvalidParameterError(f"unknown repetition policy: {self.kind!r}")
        if self.kind == FIXED and self.p < 1:
            raise InvalidParameterError("fixed repetitions need p >= 1")
        if self.kind == PER_WORKER and (not self.per_worker or min(self.per_worker) < 1):
            raise InvalidParameterError("per-worker repetitions need one p >= 1 per worker")
        if self.kind == BUDGETED and not self.time_budget > 0:
            raise InvalidParameterError("budgeted repetitions need a positive time budget")
        if self.max_reps < 1:
            raise InvalidParameterError("max_reps must be at least 1")

    @property
    def budgeted(self) -> bool:
        return self.kind == BUDGETED

    def repetitions(self, worker_id: int) -> int:
        """Fixed repetition count for a worker (not defined for budgeted policies)"""
        if self.kind == FIXED:
            return self.p
        if self.kind == PER_WORKER:
            if not 0 <= worker_id < len(self.per_worker):
                raise InvalidParameterError(f"no repetition count for worker {worker_id}")
            return self.per_worker[worker_id]
        raise InvalidParameterError("budgeted policies decide p from elapsed compute time")


# ---------------------------------------------------------------------------
# DAve-RPG
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdjustmentMsg:
    worker_id: int
    delta: np.ndarray
    x_local: Optional[np.ndarray] = field(default=None, repr=False)
    p: int = 1


@dataclass(frozen=True, eq=False)
class MasterState:
    x_bar: np.ndarray
    k: int
    step_config: StepConfig


@dataclass(frozen=True, eq=False)
class WorkerState:
    worker_id: int
    x: np.ndarray
    gamma: float
    pi: float
    gamma_bar: float
    last_received: np.ndarray


def master_init(x_bar0, step_config: StepConfig) -> MasterState:
    return MasterState(x_bar=np.array(x_bar0, dtype=float), k=0, step_config=step_config)


def worker_init(worker_id: int, step_config: StepConfig, x_init, x_bar0) -> WorkerState:
    if not 0 <= worker_id < step_config.M:
        raise InvalidParameterError(f"worker id {worker_id} outside 0..{step_config.M - 1}")
    return WorkerState(
        worker_id=worker_id,
        x=np.array(x_init, dtype=float),
        gamma=float(step_config.gammas[worker_id]),
        pi=float(step_config.pis[worker_id]),
        gamma_bar=step_config.gamma_bar,
        last_received=np.array(x_bar0, dtype=float),
    )


def rpg_repetitions(
    worker: WorkerState,
    x_bar,
    term: SmoothTerm,
    reg: Regularizer,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Proximal-gradient repetitions started from x_bar, yielding (delta, x)
    after each one. The caller decides when to stop.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != (term.dim,) or worker.x.shape != (term.dim,):
        raise DimensionMismatchError(
            f"worker {worker.worker_id}: x_bar {x_bar.shape} / x {worker.x.shape} vs dim {term.dim}"
        )
    x = worker.x
    delta = np.zeros(term.dim)
    while True:
        z = prox_reg(reg, x_bar + delta, worker.gamma_bar)
        x_plus = z - worker.gamma * grad_smooth(term, z)
        delta = delta + worker.pi * (x_plus - x)
        x = x_plus
        yield delta, x


def rpg_worker_round(
    worker: WorkerState,
    x_bar,
    p: int,
    term: SmoothTerm,
    reg: Regularizer,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One worker round of p proximal-gradient repetitions started from x_bar.

    Returns (delta, x_new). With p = 1 and g = 0 this is a single gradient
    step on x_bar followed by the weighted difference.
    """
    if p < 1:
        raise InvalidParameterError(f"repetitions must be >= 1, got {p}")
    for q, (delta, x) in enumerate(rpg_repetitions(worker, x_bar, term, reg), start=1):
        if q == p:
            return delta, x


def worker_commit(worker: WorkerState, x_new, x_bar_received) -> WorkerState:
    """Worker state after its adjustment was committed and the fresh x_bar came back"""
    return replace(worker, x=np.asarray(x_new, dtype=float), last_received=np.array(x_bar_received, dtype=float))


def master_apply(master: MasterState, msg: AdjustmentMsg) -> MasterState:
    delta = np.asarray(msg.delta, dtype=float)
    if delta.shape != master.x_bar.shape:
        raise DimensionMismatchError(
            f"adjustment from worker {msg.worker_id} has shape {delta.shape}, master holds {master.x_bar.shape}"
        )
    return MasterState(x_bar=master.x_bar + delta, k=master.k + 1, step_config=master.step_config)


def master_output(master: MasterState, reg: Regularizer) -> np.ndarray:
    """x = prox_{gamma_bar g}(x_bar)"""
    return prox_reg(reg, master.x_bar, master.step_config.gamma_bar)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PiagState:
    x: np.ndarray
    gradient_table: Optional[np.ndarray]
    gamma: float
    k: int = 0


def piag_init(problem: CompositeProblem, x0, gamma: float) -> PiagState:
    """Warm-up: every worker's table entry is its gradient at x0"""
    if not gamma > 0:
        raise InvalidParameterError(f"PIAG stepsize must be positive, got {gamma}")
    x0 = np.array(x0, dtype=float)
    table = np.vstack([grad_smooth(term, x0) for term in problem.terms])
    return PiagState(x=x0, gradient_table=table, gamma=float(gamma))


def piag_step(state: PiagState, fresh: Tuple[int, np.ndarray], reg: Regularizer) -> PiagState:
    """
    x^k = prox_{gamma g}(x^{k-1} - (gamma / M) * sum_i table_i)
    after replacing the table entry of the worker that just reported.
    """
    if state.gradient_table is None:
        raise InvalidParameterError("PIAG gradient table is not initialized")
    worker_id, gradient = fresh
    table = state.gradient_table
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != state.x.shape:
        raise DimensionMismatchError(f"gradient shape {gradient.shape} vs iterate {state.x.shape}")
    if not 0 <= worker_id < table.shape[0]:
        raise InvalidParameterError(f"worker id {worker_id} outside the gradient table")
    table = table.copy()
    table[worker_id] = gradient
    x_new = prox_reg(reg, state.x - state.gamma * table.mean(axis=0), state.gamma)
    return PiagState(x=x_new, gradient_table=table, gamma=state.gamma, k=state.k + 1)


def piag_stepsize(mu: float, L: float, d: int) -> float:
    """
    PIAG stepsize (16 / mu) * ((1 + mu / (48 L))^(1 / (d + 1)) - 1).

    Evaluated through expm1/log1p so small mu keeps full precision; mu = 0
    returns the analytic limit 1 / (3 L (d + 1)).
    """
    if not L > 0:
        raise InvalidParameterError(f"L must be positive, got {L}")
    if mu < 0 or d < 0:
        raise InvalidParameterError(f"need mu >= 0 and d >= 0, got mu={mu}, d={d}")
    if mu == 0:
        return 1.0 / (3.0 * L * (d + 1))
    return (16.0 / mu) * math.expm1(math.log1p(mu / (48.0 * L)) / (d + 1))


def piag_reference_stepsize(problem: CompositeProblem, d: int) -> float:
    """Single PIAG stepsize for heterogeneous terms: mu = min mu_i, L = max L_i"""
    return piag_stepsize(float(problem.mus.min()), float(problem.Ls.max()), d)


def sync_pg_round(problem: CompositeProblem, x, config: StepConfig) -> np.ndarray:
    """x+ = prox_{gamma_bar g}(sum_i pi_i (x - gamma_i grad f_i(x)))"""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise DimensionMismatchError(f"iterate shape {x.shape} vs problem dimension {problem.dim}")
    if config.M != problem.M:
        raise DimensionMismatchError(f"{config.M} stepsizes for {problem.M} workers")
    averaged = np.zeros(problem.dim)
    for term, gamma, pi in zip(problem.terms, config.gammas, config.pis):
        averaged += pi * (x - gamma * grad_smooth(term, x))
    return prox_reg(problem.reg, averaged, config.gamma_bar)
