import os
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config
from .algorithm import ALGORITHMS, BUDGETED, DAVE_RPG, FIXED, RepetitionPolicy
from .data.synth import LIBSVM, PROBLEM_SOURCES, QUADRATIC_SUM
from .simulator import DELAY_KINDS, SLOW_WORKER, UNIFORM, DelayModel

SIMULATE = "simulate"
RUN = "run"

# spelling of an unset optional value in key-value files
NONE = "none"


def _split_list(value):
    """Accept '1,4,7' or '1 4 7' as well as real lists"""
    if isinstance(value, str):
        return [part for part in value.replace(",", " ").split() if part]
    if isinstance(value, (int, float)):
        return [value]
    return value


class ClusterConfig(BaseModel):
    """Settings of one threaded run: workers, repetitions, slowdown and stop rule"""
    M: int = Field(ge=1)
    gammas: Optional[List[float]] = None
    reps: int = Field(1, ge=1)
    rep_kind: str = FIXED
    rep_budget: float = 0.0  # seconds of wall time per round when budgeted
    max_reps: int = Field(100, ge=1)
    slowdown: List[float] = []  # per-worker factors, sleep = factor * slowdown_unit per gradient
    slowdown_unit: float = Field(1e-3, ge=0)
    max_iters: Optional[int] = Field(None, ge=1)
    residual_tol: Optional[float] = Field(None, gt=0)
    wall_time: Optional[float] = Field(None, gt=0)
    residual_every: int = Field(1, ge=1)
    store_snapshots: Optional[bool] = None

    @field_validator("gammas", "slowdown", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _split_list(value) if value is not None else value

    @field_validator("rep_kind")
    @classmethod
    def check_rep_kind(cls, value):
        if value not in (FIXED, BUDGETED):
            raise ValueError(f"rep_kind must be {FIXED} or {BUDGETED}")
        return value

    @model_validator(mode="after")
    def check_consistency(self):
        if self.max_iters is None and self.residual_tol is None and self.wall_time is None:
            raise ValueError("a stop rule is required: max_iters, residual_tol or wall_time")
        if self.gammas is not None and len(self.gammas) != self.M:
            raise ValueError(f"{len(self.gammas)} stepsizes for M={self.M}")
        if self.slowdown and len(self.slowdown) != self.M:
            raise ValueError(f"{len(self.slowdown)} slowdown factors for M={self.M}")
        if any(factor < 0 for factor in self.slowdown):
            raise ValueError("slowdown factors must be nonnegative")
        return self

    def repetition_policy(self) -> RepetitionPolicy:
        if self.rep_kind == BUDGETED:
            return RepetitionPolicy(kind=BUDGETED, time_budget=self.rep_budget, max_reps=self.max_reps)
        return RepetitionPolicy(kind=FIXED, p=self.reps, max_reps=self.max_reps)


class ExperimentConfig(BaseModel):
    """
    Resolved experiment settings, built from a key-value file plus flag overrides.
    Several algorithms or several reps values expand into one run each.
    """
    model_config = ConfigDict(extra="forbid")

    algorithms: List[str] = [DAVE_RPG]
    mode: str = SIMULATE
    workers: int = Field(5, ge=1)
    reps: List[int] = [1]
    rep_kind: str = FIXED
    rep_budget: float = Field(0.0, ge=0)
    max_reps: int = Field(100, ge=1)

    delay_model: str = UNIFORM
    duration: float = Field(1.0, gt=0)
    low: float = Field(0.5, gt=0)
    high: float = Field(1.5, gt=0)
    mean: float = Field(1.0, gt=0)
    slow_worker: int = Field(0, ge=0)
    slow_factor: float = Field(10.0, gt=0)
    comm_time: float = Field(0.0, ge=0)

    problem: str = QUADRATIC_SUM
    dataset: Optional[str] = None
    dim: int = Field(2, ge=1)
    n_examples: int = Field(500, ge=1)
    n_features: Optional[int] = Field(None, ge=1)
    density: float = Field(0.1, gt=0, le=1)
    condition: float = Field(2.0, ge=1)
    center_spread: float = Field(5.0, ge=0)
    init: Optional[List[float]] = None
    lambda1: float = Field(0.0, ge=0)
    lambda2: float = Field(0.0, ge=0)

    seed: int = 0
    budget_iters: Optional[int] = Field(1000, ge=1)
    budget_time: Optional[float] = Field(None, gt=0)
    reference_tol: float = Field(1e-12, gt=0)
    piag_delay: Optional[int] = Field(None, ge=0)

    residual_tol: Optional[float] = Field(None, gt=0)
    wall_time: Optional[float] = Field(None, gt=0)
    slowdown: List[float] = []

    out: str = config.OUTPUT_DIR

    @model_validator(mode="before")
    @classmethod
    def unset_none(cls, data):
        if isinstance(data, dict):
            return {key: None if isinstance(value, str) and value.strip().lower() == NONE else value
                    for key, value in data.items()}
        return data

    @field_validator("algorithms", "reps", "init", "slowdown", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _split_list(value) if value is not None else value

    @field_validator("algorithms")
    @classmethod
    def check_algorithms(cls, value):
        unknown = [name for name in value if name not in ALGORITHMS]
        if unknown or not value:
            raise ValueError(f"algorithms must be among {', '.join(ALGORITHMS)}, got {value}")
        return value

    @field_validator("reps")
    @classmethod
    def check_reps(cls, value):
        if not value or min(value) < 1:
            raise ValueError("reps must be one or more integers >= 1")
        return value

    @field_validator("mode")
    @classmethod
    def check_mode(cls, value):
        if value not in (SIMULATE, RUN):
            raise ValueError(f"mode must be {SIMULATE} or {RUN}")
        return value

    @field_validator("rep_kind")
    @classmethod
    def check_rep_kind(cls, value):
        if value not in (FIXED, BUDGETED):
            raise ValueError(f"rep_kind must be {FIXED} or {BUDGETED}")
        return value

    @field_validator("delay_model")
    @classmethod
    def check_delay_model(cls, value):
        if value not in DELAY_KINDS:
            raise ValueError(f"delay_model must be one of {', '.join(DELAY_KINDS)}")
        return value

    @field_validator("problem")
    @classmethod
    def check_problem(cls, value):
        if value not in PROBLEM_SOURCES:
            raise ValueError(f"problem must be one of {', '.join(PROBLEM_SOURCES)}")
        return value

    @model_validator(mode="after")
    def check_consistency(self):
        if self.problem == LIBSVM:
            if not self.dataset:
                raise ValueError("problem=libsvm needs a dataset path")
            if not os.path.isfile(self.dataset):
                raise ValueError(f"dataset not found: {self.dataset}")
        if self.high < self.low:
            raise ValueError("high must be >= low")
        if self.delay_model == SLOW_WORKER and self.slow_worker >= self.workers:
            raise ValueError(f"slow_worker {self.slow_worker} outside 0..{self.workers - 1}")
        if self.rep_kind == BUDGETED and not self.rep_budget > 0:
            raise ValueError("rep_kind=budgeted needs rep_budget > 0")
        if self.mode == SIMULATE and self.budget_iters is None and self.budget_time is None:
            raise ValueError("simulate mode needs budget_iters or budget_time")
        if self.mode == RUN and self.algorithms != [DAVE_RPG]:
            raise ValueError("mode=run executes dave-rpg only")
        if self.mode == RUN and self.budget_iters is None and self.residual_tol is None and self.wall_time is None:
            raise ValueError("run mode needs budget_iters, residual_tol or wall_time")
        if self.init is not None and self.problem != LIBSVM and len(self.init) not in (1, self.dim):
            raise ValueError(f"init must have 1 or {self.dim} values")
        return self

    def delay(self) -> DelayModel:
        return DelayModel(
            kind=self.delay_model,
            duration=self.duration,
            low=self.low,
            high=self.high,
            mean=self.mean,
            slow_worker=self.slow_worker,
            slow_factor=self.slow_factor,
            comm_time=self.comm_time,
        )

    def repetition_policies(self) -> List[RepetitionPolicy]:
        """One policy per run of a repetition sweep"""
        if self.rep_kind == BUDGETED:
            return [RepetitionPolicy(kind=BUDGETED, time_budget=self.rep_budget, max_reps=self.max_reps)]
        return [RepetitionPolicy(kind=FIXED, p=p, max_reps=self.max_reps) for p in self.reps]

    def cluster(self, p: int = 1) -> ClusterConfig:
        return ClusterConfig(
            M=self.workers,
            reps=p,
            rep_kind=self.rep_kind,
            rep_budget=self.rep_budget,
            max_reps=self.max_reps,
            slowdown=self.slowdown,
            max_iters=self.budget_iters,
            residual_tol=self.residual_tol,
            wall_time=self.wall_time,
        )

    def to_pairs(self) -> Dict[str, str]:
        """Flat key-value form, readable back by the config file loader"""
        pairs = {}
        for key, value in self.model_dump().items():
            if value is None:
                value = NONE
            elif isinstance(value, list):
                value = ",".join(str(v) for v in value)
            pairs[key] = str(value)
        return pairs


class RunManifest(BaseModel):
    """What one run resolved to and what it produced"""
    run_id: str
    algorithm: str
    mode: str
    p: Optional[int] = None
    seed: int
    problem_digest: str
    trace_digest: Optional[str] = None
    iterations: int = 0
    epochs: int = 0
    epoch_boundaries: List[int] = []
    max_delay: Optional[int] = None
    average_delay_bound: Optional[float] = None
    mean_delay: Optional[float] = None
    piag_gamma: Optional[float] = None
    lambda1: float = 0.0
    nonzero_fraction: Optional[float] = None
    final_suboptimality: Optional[float] = None
    final_distance_sq: Optional[float] = None
    trace_csv: Optional[str] = None
    report_csv: Optional[str] = None
    partial: bool = False
    error: Optional[str] = None
    config: Dict[str, str] = {}
