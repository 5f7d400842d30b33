"""
Deterministic discrete-event simulation of asynchronous master/worker runs.

Each worker alternates a compute phase, whose duration is drawn from its own
random substream, and an instantaneous exchange with the master. Exchanges are
numbered k = 1, 2, ... in completion order, ties broken by worker index. The
schedule never depends on iterate values, so the same seed gives the same
update order for every algorithm.

Index 0 is the initial state. Before it lies a virtual round-robin history
ending at 0: worker j last updated at j - (M - 1), once per M exchanges, so
only worker M - 1 has an update at index 0 itself.
"""
import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from . import config
from .algorithm import (
    DAVE_RPG,
    PER_WORKER,
    PIAG,
    SYNC_PG,
    AdjustmentMsg,
    MasterState,
    PiagState,
    RepetitionPolicy,
    StepConfig,
    configure_steps,
    default_stepsizes,
    master_apply,
    master_init,
    master_output,
    piag_init,
    piag_reference_stepsize,
    piag_step,
    rpg_worker_round,
    sync_pg_round,
    worker_commit,
    worker_init,
)
from .errors import DimensionMismatchError, InvalidParameterError, MissingSnapshotsError
from .problem import CompositeProblem, Regularizer, grad_smooth, prox_reg

logger = logging.getLogger(__name__)

CONSTANT = "constant"
UNIFORM = "uniform"
EXPONENTIAL = "exponential"
SLOW_WORKER = "slow-worker"
DELAY_KINDS = (CONSTANT, UNIFORM, EXPONENTIAL, SLOW_WORKER)

# worker id recorded for synchronous rounds
ALL_WORKERS = -1


@dataclass(frozen=True)
class DelayModel:
    """
    Compute-time distribution per worker round.

    constant:    every repetition takes `duration`
    uniform:     uniform on [low, high]
    exponential: exponential with the given mean
    slow-worker: uniform on [low, high], multiplied by slow_factor for slow_worker

    comm_time is added once per round on top of the compute time.
    """
    kind: str = CONSTANT
    duration: float = 1.0
    low: float = 0.5
    high: float = 1.5
    mean: float = 1.0
    slow_worker: int = 0
    slow_factor: float = 10.0
    comm_time: float = 0.0

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise InvalidParameterError(f"unknown delay model: {self.kind!r}")
        if self.kind == CONSTANT and not self.duration > 0:
            raise InvalidParameterError("constant duration must be positive")
        if self.kind in (UNIFORM, SLOW_WORKER):
            if not self.low > 0:
                raise InvalidParameterError("uniform durations need low > 0")
            if self.high < self.low:
                raise InvalidParameterError(f"uniform durations need high >= low, got [{self.low}, {self.high}]")
        if self.kind == EXPONENTIAL and not self.mean > 0:
            raise InvalidParameterError("exponential mean must be positive")
        if self.kind == SLOW_WORKER:
            if self.slow_worker < 0:
                raise InvalidParameterError("slow worker index must be nonnegative")
            if not self.slow_factor > 0:
                raise InvalidParameterError("slow factor must be positive")
        if self.comm_time < 0:
            raise InvalidParameterError("communication time must be nonnegative")


class WorkerStreams:
    """One Philox substream per worker, spawned from a single seed"""

    def __init__(self, seed: int, M: int):
        if M < 1:
            raise InvalidParameterError("at least one worker is required")
        children = np.random.SeedSequence(seed).spawn(M)
        self._generators = [np.random.Generator(np.random.Philox(child)) for child in children]

    def __getitem__(self, worker_id: int) -> np.random.Generator:
        return self._generators[worker_id]

    def __len__(self) -> int:
        return len(self._generators)


def sample_compute_time(model: DelayModel, worker_id: int, rng: np.random.Generator) -> float:
    if worker_id < 0:
        raise InvalidParameterError(f"invalid worker id {worker_id}")
    if model.kind == CONSTANT:
        return model.duration
    if model.kind == UNIFORM:
        return float(rng.uniform(model.low, model.high))
    if model.kind == EXPONENTIAL:
        # an exact zero has probability ~2^-53 but would break strict positivity
        return max(float(rng.exponential(model.mean)), np.finfo(float).tiny)
    base = float(rng.uniform(model.low, model.high))
    return base * model.slow_factor if worker_id == model.slow_worker else base


def _draw_round(model: DelayModel, policy: RepetitionPolicy, worker_id: int, rng) -> Tuple[int, float]:
    """(repetitions, round duration) for one worker round"""
    elapsed = 0.0
    if policy.budgeted:
        p = 0
        while p == 0 or (p < policy.max_reps and elapsed < policy.time_budget):
            elapsed += sample_compute_time(model, worker_id, rng)
            p += 1
    else:
        p = policy.repetitions(worker_id)
        for _ in range(p):
            elapsed += sample_compute_time(model, worker_id, rng)
    return p, elapsed + model.comm_time


@dataclass(frozen=True)
class ScheduledExchange:
    k: int
    worker: int
    time: float
    p: int


def iter_schedule(
    M: int,
    model: DelayModel,
    policy: RepetitionPolicy,
    seed: int,
    max_iters: Optional[int] = None,
    max_time: Optional[float] = None,
) -> Iterator[ScheduledExchange]:
    """Exchange order of an asynchronous run, without any arithmetic on iterates"""
    streams = WorkerStreams(seed, M)
    heap: List[Tuple[float, int, int]] = []
    for i in range(M):
        p, duration = _draw_round(model, policy, i, streams[i])
        heapq.heappush(heap, (duration, i, p))
    k = 0
    while heap:
        if max_iters is not None and k >= max_iters:
            return
        t, i, p = heapq.heappop(heap)
        if max_time is not None and t > max_time:
            return
        k += 1
        yield ScheduledExchange(k=k, worker=i, time=t, p=p)
        p_next, duration = _draw_round(model, policy, i, streams[i])
        heapq.heappush(heap, (t + duration, i, p_next))


def _iter_sync_schedule(M, model, seed, max_iters=None, max_time=None) -> Iterator[ScheduledExchange]:
    streams = WorkerStreams(seed, M)
    single = RepetitionPolicy()
    t = 0.0
    k = 0
    while max_iters is None or k < max_iters:
        t += max(_draw_round(model, single, i, streams[i])[1] for i in range(M))
        if max_time is not None and t > max_time:
            return
        k += 1
        yield ScheduledExchange(k=k, worker=ALL_WORKERS, time=t, p=1)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    k: int
    worker: int
    sim_time: float
    p: int
    delta_norm: float


@dataclass(eq=False)
class Trace:
    """
    Per-exchange log of one run.

    x_bars[k] is the master variable after exchange k (x_bars[0] the initial
    one). For PIAG and synchronous runs it holds the iterate itself and
    gamma_bar is None. locals[k-1] and deltas[k-1] are the parameter the
    updating worker committed at exchange k and the adjustment it sent.
    """
    algorithm: str
    M: int
    dim: int
    pis: np.ndarray
    gamma_bar: Optional[float]
    init_locals: np.ndarray
    x_bar0: np.ndarray
    workers: np.ndarray
    times: np.ndarray
    ps: np.ndarray
    delta_norms: np.ndarray
    x_bars: Optional[np.ndarray] = field(default=None, repr=False)
    locals: Optional[np.ndarray] = field(default=None, repr=False)
    deltas: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None
    partial: bool = False

    def __len__(self) -> int:
        return int(self.workers.shape[0])

    @property
    def has_snapshots(self) -> bool:
        return self.x_bars is not None

    @property
    def synchronous(self) -> bool:
        return self.algorithm == SYNC_PG

    def record(self, k: int) -> TraceRecord:
        if not 1 <= k <= len(self):
            raise IndexError(f"exchange {k} outside 1..{len(self)}")
        j = k - 1
        return TraceRecord(
            k=k,
            worker=int(self.workers[j]),
            sim_time=float(self.times[j]),
            p=int(self.ps[j]),
            delta_norm=float(self.delta_norms[j]),
        )

    def records(self) -> Iterator[TraceRecord]:
        for k in range(1, len(self) + 1):
            yield self.record(k)

    def iterate(self, k: int, reg: Regularizer) -> np.ndarray:
        """Output iterate x^k, the prox of x_bar^k for DAve-RPG runs"""
        if self.x_bars is None:
            raise MissingSnapshotsError("trace was recorded without iterate snapshots")
        if self.gamma_bar is None:
            return self.x_bars[k].copy()
        return prox_reg(reg, self.x_bars[k], self.gamma_bar)


class TraceRecorder:
    """Append-only trace builder shared by the simulator and the threaded runtime"""

    def __init__(self, algorithm, M, dim, pis, gamma_bar, init_locals, x_bar0, store_snapshots, seed=None):
        self.algorithm = algorithm
        self.M = M
        self.dim = dim
        self.pis = np.asarray(pis, dtype=float)
        self.gamma_bar = gamma_bar
        self.init_locals = np.array(init_locals, dtype=float)
        self.x_bar0 = np.array(x_bar0, dtype=float)
        self.store_snapshots = store_snapshots
        self.seed = seed
        self._workers: List[int] = []
        self._times: List[float] = []
        self._ps: List[int] = []
        self._norms: List[float] = []
        self._x_bars: List[np.ndarray] = [self.x_bar0.copy()] if store_snapshots else []
        self._locals: List[np.ndarray] = []
        self._deltas: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._workers)

    def append(self, worker: int, time: float, p: int, delta, x_bar, x_local=None):
        delta = np.asarray(delta, dtype=float)
        self._workers.append(worker)
        self._times.append(time)
        self._ps.append(p)
        self._norms.append(float(np.linalg.norm(delta)))
        if self.store_snapshots:
            self._x_bars.append(np.array(x_bar, dtype=float))
            self._deltas.append(delta.copy())
            if x_local is not None:
                self._locals.append(np.array(x_local, dtype=float))

    def build(self, partial: bool = False) -> Trace:
        snapshots = self.store_snapshots
        return Trace(
            algorithm=self.algorithm,
            M=self.M,
            dim=self.dim,
            pis=self.pis,
            gamma_bar=self.gamma_bar,
            init_locals=self.init_locals,
            x_bar0=self.x_bar0,
            workers=np.array(self._workers, dtype=np.int64),
            times=np.array(self._times, dtype=float),
            ps=np.array(self._ps, dtype=np.int64),
            delta_norms=np.array(self._norms, dtype=float),
            x_bars=np.vstack(self._x_bars) if snapshots else None,
            locals=np.vstack(self._locals) if snapshots and self._locals else None,
            deltas=np.vstack(self._deltas) if snapshots and self._deltas else None,
            seed=self.seed,
            partial=partial,
        )


def trace_digest(trace: Trace) -> str:
    """sha256 over the schedule and every stored vector of a trace"""
    digest = hashlib.sha256()
    digest.update(trace.algorithm.encode("utf-8"))
    for array in (trace.workers, trace.times, trace.ps, trace.delta_norms, trace.x_bar0,
                  trace.x_bars, trace.locals, trace.deltas):
        if array is not None:
            digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def initial_locals(problem: CompositeProblem, init) -> np.ndarray:
    M, n = problem.M, problem.dim
    if init is None:
        return np.zeros((M, n))
    init = np.asarray(init, dtype=float)
    if init.ndim == 0:
        return np.full((M, n), float(init))
    if init.shape == (n,):
        return np.tile(init, (M, 1))
    if init.shape == (M, n):
        return init.copy()
    raise DimensionMismatchError(f"initial point of shape {init.shape} for M={M}, dim={n}")


def _check_budget(max_iters, max_time):
    if max_iters is None and max_time is None:
        raise InvalidParameterError("a budget (max_iters or max_time) is required")
    if max_iters is not None and max_iters <= 0:
        raise InvalidParameterError("max_iters must be positive")
    if max_time is not None and not max_time > 0:
        raise InvalidParameterError("max_time must be positive")


Observer = Callable[[int, int, np.ndarray, Optional[np.ndarray]], None]


def observed_max_delay(M: int, model: DelayModel, seed: int, max_iters=None, max_time=None) -> int:
    """Largest delay in the single-repetition schedule of a seed"""
    workers = [ex.worker for ex in iter_schedule(M, model, RepetitionPolicy(), seed, max_iters, max_time)]
    if not workers:
        return 0
    return delays_from_workers(np.array(workers), M).max_delay


def simulate(
    problem: CompositeProblem,
    algo: str = DAVE_RPG,
    steps: Optional[StepConfig] = None,
    policy: Optional[RepetitionPolicy] = None,
    model: Optional[DelayModel] = None,
    seed: int = 0,
    max_iters: Optional[int] = None,
    max_time: Optional[float] = None,
    init=None,
    piag_gamma: Optional[float] = None,
    store_snapshots: Optional[bool] = None,
    observer: Optional[Observer] = None,
    reanchor_every: Optional[int] = None,
):
    """
    Run one algorithm on the simulated asynchronous schedule.

    Args:
        problem: composite problem with one smooth term per worker
        algo: dave-rpg, piag or sync-pg
        steps: local stepsizes (defaults to default_stepsizes)
        policy: repetition policy (DAve-RPG only)
        model: per-round compute time distribution
        seed: root seed of the per-worker substreams
        max_iters / max_time: budget in exchanges or simulated time
        init: x_i^0 as a scalar, one vector, or one row per worker
        piag_gamma: PIAG stepsize; defaults to the reference stepsize for
            the largest delay observed on the seed's schedule
        store_snapshots: keep per-exchange vectors (default: dim below the
            snapshot limit)
        observer: called as observer(k, worker, x_bar, x_local) for k = 0..K
        reanchor_every: recompute x_bar from the local parameters every so
            many exchanges (defaults to on only in verification mode)

    Returns:
        (Trace, final state): a MasterState for DAve-RPG, a PiagState for
        PIAG and the final iterate for synchronous PG
    """
    if problem.M < 1:
        raise InvalidParameterError("at least one worker is required")
    _check_budget(max_iters, max_time)
    model = model or DelayModel()
    policy = policy or RepetitionPolicy()
    steps = steps or configure_steps(default_stepsizes(problem))
    if steps.M != problem.M:
        raise DimensionMismatchError(f"{steps.M} stepsizes for {problem.M} workers")
    if model.kind == SLOW_WORKER and model.slow_worker >= problem.M:
        raise InvalidParameterError(f"slow worker {model.slow_worker} outside 0..{problem.M - 1}")
    if policy.kind == PER_WORKER and len(policy.per_worker) != problem.M:
        raise InvalidParameterError(f"{len(policy.per_worker)} repetition counts for {problem.M} workers")
    if store_snapshots is None:
        store_snapshots = problem.dim <= config.SNAPSHOT_DIM_LIMIT
    if reanchor_every is None and config.VERIFY:
        reanchor_every = config.REANCHOR_EVERY

    logger.info(f"Simulating {algo}: M={problem.M}, dim={problem.dim}, model={model.kind}, seed={seed}")
    if algo == DAVE_RPG:
        result = _simulate_dave(problem, steps, policy, model, seed, max_iters, max_time, init,
                                store_snapshots, observer, reanchor_every)
    elif algo == PIAG:
        result = _simulate_piag(problem, model, seed, max_iters, max_time, init, piag_gamma,
                                store_snapshots, observer)
    elif algo == SYNC_PG:
        result = _simulate_sync(problem, steps, model, seed, max_iters, max_time, init,
                                store_snapshots, observer)
    else:
        raise InvalidParameterError(f"unknown algorithm: {algo!r}")
    logger.info(f"Simulation finished after {len(result[0])} exchanges")
    return result


def _simulate_dave(problem, steps, policy, model, seed, max_iters, max_time, init,
                   store_snapshots, observer, reanchor_every) -> Tuple[Trace, MasterState]:
    locals_ = initial_locals(problem, init)
    x_bar0 = steps.pis @ locals_
    master = master_init(x_bar0, steps)
    workers = [worker_init(i, steps, locals_[i], x_bar0) for i in range(problem.M)]
    recorder = TraceRecorder(DAVE_RPG, problem.M, problem.dim, steps.pis, steps.gamma_bar,
                             locals_, x_bar0, store_snapshots, seed)
    if observer is not None:
        observer(0, ALL_WORKERS, master.x_bar, None)

    for ex in iter_schedule(problem.M, model, policy, seed, max_iters, max_time):
        worker = workers[ex.worker]
        delta, x_new = rpg_worker_round(worker, worker.last_received, ex.p, problem.terms[ex.worker], problem.reg)
        master = master_apply(master, AdjustmentMsg(worker_id=ex.worker, delta=delta, x_local=x_new, p=ex.p))
        locals_[ex.worker] = x_new
        if reanchor_every and master.k % reanchor_every == 0:
            anchored = steps.pis @ locals_
            drift = float(np.linalg.norm(anchored - master.x_bar))
            logger.debug(f"Re-anchoring x_bar at k={master.k}, drift {drift:.3e}")
            master = MasterState(x_bar=anchored, k=master.k, step_config=steps)
        workers[ex.worker] = worker_commit(worker, x_new, master.x_bar)
        recorder.append(ex.worker, ex.time, ex.p, delta, master.x_bar, x_new)
        if observer is not None:
            observer(master.k, ex.worker, master.x_bar, x_new)
    return recorder.build(), master


def _single_init(problem, init) -> np.ndarray:
    if init is None:
        return np.zeros(problem.dim)
    init = np.asarray(init, dtype=float)
    if init.ndim == 0:
        return np.full(problem.dim, float(init))
    if init.shape != (problem.dim,):
        raise DimensionMismatchError(f"baselines take one initial vector of dimension {problem.dim}")
    return init.copy()


def _simulate_piag(problem, model, seed, max_iters, max_time, init, piag_gamma,
                   store_snapshots, observer) -> Tuple[Trace, PiagState]:
    x0 = _single_init(problem, init)
    if piag_gamma is None:
        d = observed_max_delay(problem.M, model, seed, max_iters, max_time)
        piag_gamma = piag_reference_stepsize(problem, d)
        logger.info(f"PIAG stepsize {piag_gamma:.3e} from observed max delay {d}")
    state = piag_init(problem, x0, piag_gamma)
    uniform_pis = np.full(problem.M, 1.0 / problem.M)
    recorder = TraceRecorder(PIAG, problem.M, problem.dim, uniform_pis, None,
                             np.tile(x0, (problem.M, 1)), x0, store_snapshots, seed)
    # worker i computes its gradient at the iterate it last received
    received = [x0.copy() for _ in range(problem.M)]
    if observer is not None:
        observer(0, ALL_WORKERS, state.x, None)

    for ex in iter_schedule(problem.M, model, RepetitionPolicy(), seed, max_iters, max_time):
        gradient = grad_smooth(problem.terms[ex.worker], received[ex.worker])
        previous = state.x
        state = piag_step(state, (ex.worker, gradient), problem.reg)
        received[ex.worker] = state.x
        recorder.append(ex.worker, ex.time, 1, state.x - previous, state.x)
        if observer is not None:
            observer(state.k, ex.worker, state.x, None)
    return recorder.build(), state


def _simulate_sync(problem, steps, model, seed, max_iters, max_time, init,
                   store_snapshots, observer) -> Tuple[Trace, np.ndarray]:
    x = _single_init(problem, init)
    recorder = TraceRecorder(SYNC_PG, problem.M, problem.dim, steps.pis, None,
                             np.tile(x, (problem.M, 1)), x, store_snapshots, seed)
    if observer is not None:
        observer(0, ALL_WORKERS, x, None)
    for ex in _iter_sync_schedule(problem.M, model, seed, max_iters, max_time):
        x_next = sync_pg_round(problem, x, steps)
        recorder.append(ALL_WORKERS, ex.time, 1, x_next - x, x_next)
        x = x_next
        if observer is not None:
            observer(ex.k, ALL_WORKERS, x, None)
    return recorder.build(), x


def final_iterate(problem: CompositeProblem, state) -> np.ndarray:
    """Output point of a finished simulation, whatever the algorithm"""
    if isinstance(state, MasterState):
        return master_output(state, problem.reg)
    if isinstance(state, PiagState):
        return state.x.copy()
    return np.asarray(state, dtype=float).copy()


# ---------------------------------------------------------------------------
# delays and epochs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DelayTable:
    """
    d[k, j]: exchanges since worker j last updated, as of exchange k
    D[k, j]: exchanges since worker j's penultimate update, k - prev_j(k)

    A worker with no real update yet reaches back into the virtual
    round-robin history: its last update is j - (M - 1), the one before that
    M exchanges earlier.
    """
    workers: np.ndarray
    d: np.ndarray
    D: np.ndarray

    @property
    def M(self) -> int:
        return self.d.shape[1]

    @property
    def K(self) -> int:
        return self.d.shape[0] - 1

    @property
    def max_delay(self) -> int:
        return int(self.d[1:].max()) if self.K else 0

    @property
    def average_delay_bound(self) -> float:
        """max over k of (1/M) sum_j d_j^k"""
        return float(self.d[1:].mean(axis=1).max()) if self.K else 0.0

    @property
    def mean_delay(self) -> float:
        return float(self.d[1:].mean()) if self.K else 0.0


def delays_from_workers(workers, M: int) -> DelayTable:
    workers = np.asarray(workers, dtype=np.int64)
    if workers.size == 0:
        raise InvalidParameterError("delay tables need a nonempty trace")
    if workers.min() < 0 or workers.max() >= M:
        raise InvalidParameterError(f"worker ids must lie in 0..{M - 1}")
    K = workers.shape[0]
    d = np.zeros((K + 1, M), dtype=np.int64)
    D = np.zeros((K + 1, M), dtype=np.int64)
    last = np.arange(M, dtype=np.int64) - (M - 1)
    prev = last - M
    d[0] = -last
    D[0] = -prev
    for k, i in enumerate(workers, start=1):
        prev[i] = last[i]
        last[i] = k
        d[k] = k - last
        D[k] = k - prev
    return DelayTable(workers=workers, d=d, D=D)


def delays_from_trace(trace: Trace, M: Optional[int] = None) -> DelayTable:
    if trace.synchronous:
        raise InvalidParameterError("synchronous traces have no delays")
    return delays_from_workers(trace.workers, trace.M if M is None else M)


@dataclass(frozen=True, eq=False)
class EpochSequence:
    """Epoch boundaries k_0 = 0 < k_1 < ... within a trace of `horizon` exchanges"""
    boundaries: np.ndarray
    horizon: int

    def __len__(self) -> int:
        """Number of complete epochs"""
        return int(self.boundaries.shape[0]) - 1

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def epoch_of(self, k) -> np.ndarray:
        """Epoch index m with k_m <= k < k_{m+1}; the trailing partial epoch continues the count"""
        return np.searchsorted(self.boundaries, k, side="right") - 1

    def epoch_indices(self) -> np.ndarray:
        return self.epoch_of(np.arange(self.horizon + 1))


def epoch_sequence(delays: DelayTable) -> EpochSequence:
    """k_{m+1} = min{k : k - D_i^k >= k_m for every i}"""
    k = np.arange(delays.K + 1)
    # k - D_i^k is worker i's penultimate update, nondecreasing in k
    min_prev = (k[:, None] - delays.D).min(axis=1)
    boundaries = [0]
    while True:
        nxt = int(np.searchsorted(min_prev, boundaries[-1], side="left"))
        if nxt > delays.K:
            break
        boundaries.append(nxt)
    return EpochSequence(boundaries=np.array(boundaries, dtype=np.int64), horizon=delays.K)


def brute_force_epochs(workers, M: int) -> EpochSequence:
    """Epochs by counting: every worker updates twice within [k_m, k_{m+1}]"""
    workers = np.asarray(workers, dtype=np.int64)
    # only the last worker's virtual update falls inside [0, k]
    counts = np.zeros(M, dtype=np.int64)
    counts[M - 1] = 1
    boundaries = [0]
    for k, i in enumerate(workers, start=1):
        counts[i] += 1
        if counts.min() >= 2:
            boundaries.append(k)
            counts = np.zeros(M, dtype=np.int64)
            counts[i] = 1
    return EpochSequence(boundaries=np.array(boundaries, dtype=np.int64), horizon=int(workers.shape[0]))


@dataclass
class EpochBoundsReport:
    """Observed delays against the per-epoch gap bounds for uniform and average delays"""
    max_delay: int
    average_delay_bound: float
    mean_delay: float
    gaps: List[int]
    uniform_gap_bound: int
    average_gap_bound: float
    uniform_violations: List[int] = field(default_factory=list)
    average_violations: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.uniform_violations and not self.average_violations

    def to_dict(self):
        return {
            "max_delay": self.max_delay,
            "average_delay_bound": self.average_delay_bound,
            "mean_delay": self.mean_delay,
            "epochs": len(self.gaps),
            "max_gap": max(self.gaps) if self.gaps else 0,
            "uniform_gap_bound": self.uniform_gap_bound,
            "average_gap_bound": self.average_gap_bound,
            "uniform_violations": self.uniform_violations,
            "average_violations": self.average_violations,
            "ok": self.ok,
        }


def verify_epoch_bounds(delays: DelayTable, epochs: EpochSequence) -> EpochBoundsReport:
    """
    Check k_{m+1} - k_m <= 2d + 1 for the largest observed delay d and
    k_{m+1} - k_m <= 2M(2 d_bar - M + 3) - 3 for the largest observed
    average delay d_bar.
    """
    M = delays.M
    d = delays.max_delay
    d_bar = delays.average_delay_bound
    uniform_bound = 2 * d + 1
    average_bound = 2 * M * (2 * d_bar - M + 3) - 3
    gaps = [int(g) for g in epochs.gaps]
    report = EpochBoundsReport(
        max_delay=d,
        average_delay_bound=d_bar,
        mean_delay=delays.mean_delay,
        gaps=gaps,
        uniform_gap_bound=uniform_bound,
        average_gap_bound=average_bound,
        uniform_violations=[m for m, g in enumerate(gaps) if g > uniform_bound],
        average_violations=[m for m, g in enumerate(gaps) if g > average_bound + 1e-9],
    )
    if not report.ok:
        logger.warning(f"Epoch gap bounds violated: {report.to_dict()}")
    return report
