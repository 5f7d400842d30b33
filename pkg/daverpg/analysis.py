"""
Reference solutions, measured convergence series and the theoretical bounds
they are checked against.

Everything here is a pure function of a finished trace (or of a stream of
master snapshots, see ReportBuilder), so reports can be computed from
several threads at once.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algorithm import DAVE_RPG, StepConfig, configure_steps, default_stepsizes, sync_pg_round
from .errors import ConvergenceError, DimensionMismatchError, InvalidParameterError, MissingSnapshotsError
from .problem import (
    QUADRATIC,
    ZERO,
    CompositeProblem,
    evaluate,
    grad_smooth,
    prox_reg,
    residual_norm,
)
from .simulator import (
    ALL_WORKERS,
    Trace,
    delays_from_trace,
    epoch_sequence,
)

logger = logging.getLogger(__name__)

REFERENCE_TOL = 1e-12
REFERENCE_MAX_ITERS = 200_000
ENVELOPE_SLACK = 1e-9
MONOTONE_SLACK = 1e-12

UNIFORM_BOUND = "uniform"
AVERAGE_BOUND = "average"


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """x_star with its optimal value, the shifted local optima and their weighted average"""
    x_star: np.ndarray
    F_star: float
    x_bar_star: np.ndarray
    shifted: np.ndarray
    gammas: np.ndarray
    pis: np.ndarray
    gamma_bar: float
    residual: float
    iterations: int

    def loo_star(self, i: int) -> np.ndarray:
        """Leave-one-out weighted average of the shifted optima without worker i"""
        return (self.x_bar_star - self.pis[i] * self.shifted[i]) / (1.0 - self.pis[i])


def _polish_quadratic(problem: CompositeProblem, x: np.ndarray) -> np.ndarray:
    """
    Exact solve on the current support for sums of quadratics.

    Zero components and signs are taken from x; the candidate is kept only if
    the signs survive and the residual does not grow.
    """
    if any(term.kind != QUADRATIC for term in problem.terms):
        return x
    H = sum(term.hessian for term in problem.terms) / problem.M
    b = sum(term.hessian @ term.center for term in problem.terms) / problem.M
    if problem.reg.kind == ZERO or problem.reg.lambda1 == 0:
        support = np.ones(problem.dim, dtype=bool)
        rhs = b
    else:
        support = x != 0
        rhs = b - problem.reg.lambda1 * np.sign(x)
    candidate = np.zeros(problem.dim)
    if support.any():
        try:
            candidate[support] = np.linalg.solve(H[np.ix_(support, support)], rhs[support])
        except np.linalg.LinAlgError:
            return x
        if problem.reg.kind != ZERO and np.any(np.sign(candidate[support]) != np.sign(x[support])):
            return x
    return candidate if residual_norm(problem, candidate) <= residual_norm(problem, x) else x


def shifted_optima(problem: CompositeProblem, x_star, gammas) -> np.ndarray:
    """x_i* = x* - gamma_i grad f_i(x*), one row per worker"""
    return np.vstack([x_star - g * grad_smooth(term, x_star) for term, g in zip(problem.terms, gammas)])


def reference_solution(
    problem: CompositeProblem,
    config: Optional[StepConfig] = None,
    tol: float = REFERENCE_TOL,
    max_iters: int = REFERENCE_MAX_ITERS,
    x0=None,
) -> ReferenceSolution:
    """Solve to min-norm residual <= tol with synchronous proximal gradient"""
    config = config or configure_steps(default_stepsizes(problem))
    if config.M != problem.M:
        raise DimensionMismatchError(f"{config.M} stepsizes for {problem.M} workers")
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float)
    residual = residual_norm(problem, x)
    iterations = 0
    while residual > tol:
        if iterations >= max_iters:
            raise ConvergenceError(
                f"reference solver stopped at residual {residual:.3e} after {iterations} iterations",
                iterations=iterations,
                residual=residual,
            )
        x = sync_pg_round(problem, x, config)
        iterations += 1
        residual = residual_norm(problem, x)
        if iterations % 10_000 == 0:
            logger.warning(f"Reference solver slow: residual {residual:.3e} after {iterations} iterations")
    x = _polish_quadratic(problem, x)
    residual = residual_norm(problem, x)

    shifted = shifted_optima(problem, x, config.gammas)
    logger.info(f"Reference solution after {iterations} iterations, residual {residual:.3e}")
    return ReferenceSolution(
        x_star=x,
        F_star=evaluate(problem, x),
        x_bar_star=config.pis @ shifted,
        shifted=shifted,
        gammas=np.array(config.gammas),
        pis=np.array(config.pis),
        gamma_bar=config.gamma_bar,
        residual=residual,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# theoretical bounds
# ---------------------------------------------------------------------------

def repetition_factor(gamma_mu: float, pi: float, p) -> float:
    """
    r(p) = 1 - gamma_mu * sum_{q=1}^{p-1} (1 - gamma_mu)^(q-1) * pi^q,
    and r(inf) = 1 - gamma_mu * pi / (1 - (1 - gamma_mu) * pi) for p = math.inf.
    """
    if not 0 <= gamma_mu <= 1:
        raise InvalidParameterError(f"gamma * mu must lie in [0, 1], got {gamma_mu}")
    if not 0 < pi <= 1:
        raise InvalidParameterError(f"pi must lie in (0, 1], got {pi}")
    if p is None or p == math.inf:
        if gamma_mu == 0:
            return 1.0
        return 1.0 - gamma_mu * pi / (1.0 - (1.0 - gamma_mu) * pi)
    if int(p) != p or p < 1:
        raise InvalidParameterError(f"repetitions must be a positive integer or inf, got {p}")
    q = np.arange(1, int(p))
    return float(1.0 - gamma_mu * np.sum((1.0 - gamma_mu) ** (q - 1) * pi ** q))


def _max_initial_distance_sq(init_locals, shifted) -> float:
    init_locals = np.asarray(init_locals, dtype=float)
    if init_locals.shape != shifted.shape:
        raise DimensionMismatchError(f"initial locals {init_locals.shape} vs shifted optima {shifted.shape}")
    return float(np.max(np.sum((init_locals - shifted) ** 2, axis=1)))


def _contraction_factors(problem: CompositeProblem, reference: ReferenceSolution) -> np.ndarray:
    return reference.gammas * problem.mus


def epoch_alpha(problem: CompositeProblem, reference: ReferenceSolution, reps: Sequence[int]) -> float:
    """max_i (1 - gamma_i mu_i)^2 r_i(p_i)^2 for one per-worker repetition vector"""
    gamma_mu = _contraction_factors(problem, reference)
    return max(
        ((1.0 - gm) * repetition_factor(gm, pi, p)) ** 2
        for gm, pi, p in zip(gamma_mu, reference.pis, reps)
    )


def strong_rate_envelope(
    problem: CompositeProblem,
    reference: ReferenceSolution,
    init_locals,
    m: int,
    p_schedule=None,
) -> Tuple[float, Optional[float]]:
    """
    Squared-distance envelopes at epoch m.

    Returns ((1 - rho)^(2m) * max_i ||x_i^0 - x_i*||^2, tighter) with
    rho = min_i gamma_i mu_i. The tighter bound replaces (1 - rho)^2 by
    alpha_l for epochs l = 1..m, using row l-1 of p_schedule as the
    per-worker repetitions; it is None when no schedule is given.
    """
    gamma_mu = _contraction_factors(problem, reference)
    if np.any(problem.mus <= 0):
        raise InvalidParameterError("linear envelopes need every mu_i > 0")
    if m < 0:
        raise InvalidParameterError("epoch index must be nonnegative")
    start = _max_initial_distance_sq(init_locals, reference.shifted)
    rho = float(gamma_mu.min())
    base = (1.0 - rho) ** (2 * m) * start
    if p_schedule is None:
        return base, None
    p_schedule = np.asarray(p_schedule)
    if p_schedule.shape[0] < m:
        raise InvalidParameterError(f"repetition schedule covers {p_schedule.shape[0]} epochs, need {m}")
    tighter = start
    for ell in range(m):
        tighter *= epoch_alpha(problem, reference, p_schedule[ell])
    return base, tighter


def sublinear_residual_bound(m: int, init_locals, shifted, gammas, Ls) -> float:
    """
    min_{k' <= k} ||dF(x^k')|| <= 2 sqrt(2) / sqrt(m) * max_i ||x_i^0 - x_i*||
                                  / min_j (gamma_j sqrt(2 - gamma_j L_j))
    """
    if m < 1:
        raise InvalidParameterError("the residual bound needs m >= 1")
    gammas = np.asarray(gammas, dtype=float)
    Ls = np.asarray(Ls, dtype=float)
    if np.any(gammas <= 0) or np.any(gammas * Ls >= 2):
        raise InvalidParameterError("the residual bound needs every gamma_j in (0, 2 / L_j)")
    distance = math.sqrt(_max_initial_distance_sq(init_locals, np.asarray(shifted, dtype=float)))
    denominator = float(np.min(gammas * np.sqrt(2.0 - gammas * Ls)))
    return 2.0 * math.sqrt(2.0) / math.sqrt(m) * distance / denominator


@dataclass(frozen=True)
class EpochIterationBound:
    """Per-epoch gap bound and the resulting linear growth k_m <= growth * m"""
    kind: str
    gap: float
    growth: float

    def k_bound(self, m: int) -> float:
        return self.growth * m


def epoch_iteration_bound(M: int, bound_kind: str, bound: float) -> EpochIterationBound:
    """
    uniform delays d = M + tau:         gap <= 2d + 1,             k_m <= (2M + 2 tau + 1) m
    average delays d_bar = (M-1)/2 + tau: gap <= 2M(2 d_bar - M + 3) - 3, k_m <= 4M(tau + 1) m
    """
    if M < 1:
        raise InvalidParameterError("at least one worker is required")
    if bound_kind == UNIFORM_BOUND:
        if bound < M:
            raise InvalidParameterError(f"a uniform delay bound is at least M={M}, got {bound}")
        tau = bound - M
        return EpochIterationBound(UNIFORM_BOUND, gap=2 * bound + 1, growth=2 * M + 2 * tau + 1)
    if bound_kind == AVERAGE_BOUND:
        minimum = (M - 1) / 2
        if bound < minimum:
            raise InvalidParameterError(f"an average delay bound is at least {minimum}, got {bound}")
        tau = bound - minimum
        return EpochIterationBound(AVERAGE_BOUND, gap=2 * M * (2 * bound - M + 3) - 3, growth=4 * M * (tau + 1))
    raise InvalidParameterError(f"unknown bound kind: {bound_kind!r}")


# ---------------------------------------------------------------------------
# measured series
# ---------------------------------------------------------------------------

def replay_master_variable(trace: Trace) -> np.ndarray:
    """x_bar^0 plus the recorded adjustments, applied in commit order"""
    if trace.deltas is None:
        raise MissingSnapshotsError("trace was recorded without adjustments")
    out = np.empty((len(trace) + 1, trace.dim))
    out[0] = trace.x_bar0
    x_bar = trace.x_bar0.copy()
    for k, delta in enumerate(trace.deltas, start=1):
        x_bar = x_bar + delta
        out[k] = x_bar
    return out


def aggregation_errors(trace: Trace) -> np.ndarray:
    """
    ||x_bar^k - sum_i pi_i x_i^{k - d_i^k}|| / (1 + ||x_bar^k||) for k = 0..K,
    rebuilding each worker's latest parameter from the committed locals.
    """
    if trace.algorithm != DAVE_RPG:
        raise InvalidParameterError("aggregation errors are defined for DAve-RPG traces only")
    if trace.x_bars is None or trace.locals is None:
        raise MissingSnapshotsError("trace was recorded without local parameters")
    latest = trace.init_locals.copy()
    errors = np.empty(len(trace) + 1)
    errors[0] = np.linalg.norm(trace.x_bars[0] - trace.pis @ latest) / (1.0 + np.linalg.norm(trace.x_bars[0]))
    for k in range(1, len(trace) + 1):
        latest[trace.workers[k - 1]] = trace.locals[k - 1]
        x_bar = trace.x_bars[k]
        errors[k] = np.linalg.norm(x_bar - trace.pis @ latest) / (1.0 + np.linalg.norm(x_bar))
    return errors


@dataclass(eq=False)
class ConvergenceReport:
    """
    Per-exchange series aligned on k = 0..K plus per-epoch maxima.

    a[k] is max(||x_bar^k - x_bar*||^2, ||x_bar^k_{-i(k)} - x_bar*_{-i(k)}||^2)
    and b[m] its maximum over epoch m. Bound columns are NaN where the bound
    does not apply (baseline traces, mu = 0 for the linear envelopes, m = 0
    for the residual bound).
    """
    algorithm: str
    k: np.ndarray
    sim_time: np.ndarray
    worker: np.ndarray
    p: np.ndarray
    epoch_index: np.ndarray
    d_max: np.ndarray
    distance_sq: np.ndarray
    suboptimality: np.ndarray
    residual_norm: np.ndarray
    a: np.ndarray
    b: np.ndarray
    bound_thm32: np.ndarray
    bound_cor33: np.ndarray
    bound_thm36: np.ndarray
    epoch_boundaries: List[int] = field(default_factory=list)

    @property
    def best_residual(self) -> np.ndarray:
        return np.minimum.accumulate(self.residual_norm)

    def envelope_violations(self, slack: float = ENVELOPE_SLACK) -> List[int]:
        bound = self.bound_thm32
        return [int(k) for k in np.flatnonzero(~np.isnan(bound) & (self.distance_sq > bound + slack))]

    def tight_envelope_violations(self, slack: float = ENVELOPE_SLACK) -> List[int]:
        bound = self.bound_cor33
        return [int(k) for k in np.flatnonzero(~np.isnan(bound) & (self.distance_sq > bound + slack))]

    def residual_violations(self) -> List[int]:
        bound = self.bound_thm36
        return [int(k) for k in np.flatnonzero(~np.isnan(bound) & (self.best_residual > bound))]

    def b_monotone(self, slack: float = MONOTONE_SLACK) -> bool:
        b = self.b[~np.isnan(self.b)]
        if b.size < 2:
            return True
        return bool(np.all(np.diff(b) <= slack * max(1.0, float(b[0]))))

    def rows(self, with_bounds: bool = True):
        for j in range(self.k.shape[0]):
            row = {
                "k": int(self.k[j]),
                "sim_time": float(self.sim_time[j]),
                "worker": int(self.worker[j]),
                "p": int(self.p[j]),
                "epoch_index": int(self.epoch_index[j]),
                "d_max": int(self.d_max[j]),
                "suboptimality": float(self.suboptimality[j]),
                "distance_sq": float(self.distance_sq[j]),
                "residual_norm": float(self.residual_norm[j]),
            }
            if with_bounds:
                row["bound_thm32"] = float(self.bound_thm32[j])
                row["bound_cor33"] = float(self.bound_cor33[j])
                row["bound_thm36"] = float(self.bound_thm36[j])
            yield row

    def to_dict(self) -> Dict:
        return {
            "algorithm": self.algorithm,
            "iterations": int(self.k[-1]),
            "epochs": len(self.epoch_boundaries) - 1,
            "final_distance_sq": float(self.distance_sq[-1]),
            "final_suboptimality": float(self.suboptimality[-1]),
            "best_residual": float(self.best_residual[-1]),
            "envelope_violations": len(self.envelope_violations()),
            "tight_envelope_violations": len(self.tight_envelope_violations()),
            "residual_violations": len(self.residual_violations()),
            "b_monotone": self.b_monotone(),
        }


class ReportBuilder:
    """
    Streaming accumulation of the measured series.

    Usable directly as a simulator observer, so that runs too large to keep
    per-exchange snapshots can still be reported.
    """

    def __init__(self, problem: CompositeProblem, reference: ReferenceSolution, gamma_bar: Optional[float],
                 init_locals=None):
        self.problem = problem
        self.reference = reference
        self.gamma_bar = gamma_bar
        self.pis = reference.pis
        self.latest = None if init_locals is None else np.array(init_locals, dtype=float)
        self.distance_sq: List[float] = []
        self.suboptimality: List[float] = []
        self.residual: List[float] = []
        self.a: List[float] = []

    @property
    def tracks_locals(self) -> bool:
        return self.gamma_bar is not None and self.latest is not None

    def __call__(self, k: int, worker: int, x_bar, x_local=None):
        self.update(k, worker, x_bar, x_local)

    def update(self, k: int, worker: int, x_bar, x_local=None):
        if k != len(self.distance_sq):
            raise InvalidParameterError(f"report updates must arrive in order, expected k={len(self.distance_sq)}")
        x_bar = np.asarray(x_bar, dtype=float)
        if self.gamma_bar is None:
            x = x_bar
        else:
            x = prox_reg(self.problem.reg, x_bar, self.gamma_bar)
        diff = x - self.reference.x_star
        self.distance_sq.append(float(diff @ diff))
        self.suboptimality.append(evaluate(self.problem, x) - self.reference.F_star)
        self.residual.append(residual_norm(self.problem, x))
        self.a.append(self._a_value(worker, x_bar, x_local) if self.tracks_locals else math.nan)

    def _a_value(self, worker, x_bar, x_local) -> float:
        ref = self.reference
        if worker >= 0 and x_local is not None:
            self.latest[worker] = x_local
        full = float(np.sum((x_bar - ref.x_bar_star) ** 2))
        if ref.pis.shape[0] == 1:
            return full
        # state 0: no exchange yet, so every worker is a candidate
        candidates = range(ref.pis.shape[0]) if worker < 0 else (worker,)
        loo = 0.0
        for i in candidates:
            x_loo = (x_bar - ref.pis[i] * self.latest[i]) / (1.0 - ref.pis[i])
            loo = max(loo, float(np.sum((x_loo - ref.loo_star(i)) ** 2)))
        return max(full, loo)

    def finish(self, trace: Trace) -> ConvergenceReport:
        K = len(trace)
        if len(self.distance_sq) != K + 1:
            raise InvalidParameterError(f"builder saw {len(self.distance_sq)} states for a trace of {K} exchanges")
        k = np.arange(K + 1)
        sim_time = np.concatenate([[0.0], trace.times])
        worker = np.concatenate([[ALL_WORKERS], trace.workers]).astype(np.int64)
        p = np.concatenate([[0], trace.ps]).astype(np.int64)
        nan = np.full(K + 1, math.nan)

        if trace.synchronous or K == 0:
            epoch_index = k.copy()
            d_max = np.zeros(K + 1, dtype=np.int64)
            boundaries = list(range(K + 1))
        else:
            delays = delays_from_trace(trace)
            epochs = epoch_sequence(delays)
            epoch_index = epochs.epoch_indices()
            d_max = delays.d.max(axis=1)
            boundaries = [int(b) for b in epochs.boundaries]

        a = np.array(self.a)
        b = np.full(int(epoch_index.max()) + 1, math.nan)
        if not np.all(np.isnan(a)):
            for m in range(b.shape[0]):
                b[m] = float(np.max(a[epoch_index == m]))

        bound_thm32, bound_cor33, bound_thm36 = nan.copy(), nan.copy(), nan.copy()
        if trace.algorithm == DAVE_RPG:
            bound_thm32, bound_cor33 = self._linear_envelopes(trace, epoch_index)
            bound_thm36 = self._residual_envelope(trace, epoch_index)

        return ConvergenceReport(
            algorithm=trace.algorithm,
            k=k,
            sim_time=sim_time,
            worker=worker,
            p=p,
            epoch_index=epoch_index,
            d_max=d_max,
            distance_sq=np.array(self.distance_sq),
            suboptimality=np.array(self.suboptimality),
            residual_norm=np.array(self.residual),
            a=a,
            b=b,
            bound_thm32=bound_thm32,
            bound_cor33=bound_cor33,
            bound_thm36=bound_thm36,
            epoch_boundaries=boundaries,
        )

    def _linear_envelopes(self, trace: Trace, epoch_index: np.ndarray):
        K = len(trace)
        nan = np.full(K + 1, math.nan)
        if np.any(self.problem.mus <= 0):
            return nan, nan.copy()
        ref = self.reference
        start = _max_initial_distance_sq(trace.init_locals, ref.shifted)
        rho = float(np.min(ref.gammas * self.problem.mus))
        n_epochs = int(epoch_index.max()) + 1
        base = start * (1.0 - rho) ** (2 * np.arange(n_epochs))

        # alpha_l uses each worker's smallest p over the records of epochs l-1 and l
        record_epochs = epoch_index[1:]
        tight = np.empty(n_epochs)
        tight[0] = start
        for ell in range(1, n_epochs):
            window = (record_epochs == ell - 1) | (record_epochs == ell)
            reps = []
            for i in range(trace.M):
                used = trace.ps[window & (trace.workers == i)]
                reps.append(int(used.min()) if used.size else 1)
            tight[ell] = tight[ell - 1] * epoch_alpha(self.problem, ref, reps)
        return base[epoch_index], tight[epoch_index]

    def _residual_envelope(self, trace: Trace, epoch_index: np.ndarray) -> np.ndarray:
        bound = np.full(len(trace) + 1, math.nan)
        ref = self.reference
        if np.any(ref.gammas * self.problem.Ls >= 2):
            logger.warning("Skipping residual bound: some gamma_j >= 2 / L_j")
            return bound
        for m in range(1, int(epoch_index.max()) + 1):
            bound[epoch_index == m] = sublinear_residual_bound(
                m, trace.init_locals, ref.shifted, ref.gammas, self.problem.Ls
            )
        return bound


def report(trace: Trace, problem: CompositeProblem, reference: ReferenceSolution) -> ConvergenceReport:
    """Replay a trace's stored snapshots through a ReportBuilder"""
    if not trace.has_snapshots:
        raise MissingSnapshotsError("trace has no stored iterates; report through a simulator observer instead")
    track = trace.algorithm == DAVE_RPG and trace.locals is not None
    builder = ReportBuilder(problem, reference, trace.gamma_bar, trace.init_locals if track else None)
    builder.update(0, ALL_WORKERS, trace.x_bars[0])
    for k in range(1, len(trace) + 1):
        x_local = trace.locals[k - 1] if track else None
        builder.update(k, int(trace.workers[k - 1]), trace.x_bars[k], x_local)
    return builder.finish(trace)
