"""
Composite objectives F(x) = (1/M) * sum_i f_i(x) + g(x)

Each smooth term f_i is owned by one worker and exposes a gradient oracle plus
its strong convexity / smoothness constants (mu_i, L_i). The nonsmooth part g
exposes a proximity operator. All objects are immutable once built, so the
oracles can be evaluated from several threads at once.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import DimensionMismatchError, InvalidParameterError

logger = logging.getLogger(__name__)

QUADRATIC = "quadratic"
LOGISTIC = "logistic"
ZERO = "zero"
L1 = "l1"

POWER_MAX_ITERS = 200
POWER_REL_TOL = 1e-8
POWER_INFLATION = 1.01


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _as_vector(x, dim: int) -> np.ndarray:
    """Return x as a float vector, raising if its length is not dim"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionMismatchError(f"expected a vector of dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class SmoothTerm:
    """
    One smooth local function f_i.

    quadratic: f(x) = 0.5 * (x - c)^T H (x - c)
    logistic:  f(x) = sum_j log(1 + exp(-b_j a_j^T x)) + (lambda2 / 2) ||x||^2
    """
    kind: str
    dim: int
    mu: float
    L: float
    hessian: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    features: Optional[sparse.csr_matrix] = field(default=None, repr=False)
    labels: Optional[np.ndarray] = field(default=None, repr=False)
    lambda2: float = 0.0

    def __post_init__(self):
        if self.kind not in (QUADRATIC, LOGISTIC):
            raise InvalidParameterError(f"unknown smooth term kind: {self.kind!r}")
        if self.dim < 1:
            raise InvalidParameterError("term dimension must be at least 1")
        if not self.L > 0:
            raise InvalidParameterError(f"smoothness constant must be positive, got L={self.L}")
        if not 0 <= self.mu <= self.L:
            raise InvalidParameterError(f"need 0 <= mu <= L, got mu={self.mu}, L={self.L}")

    @property
    def n_examples(self) -> int:
        return 0 if self.features is None else self.features.shape[0]


@dataclass(frozen=True)
class Regularizer:
    """g(x) = 0 (kind 'zero') or lambda1 * ||x||_1 (kind 'l1')"""
    kind: str = ZERO
    lambda1: float = 0.0

    def __post_init__(self):
        if self.kind not in (ZERO, L1):
            raise InvalidParameterError(f"unknown regularizer kind: {self.kind!r}")
        if self.lambda1 < 0:
            raise InvalidParameterError("lambda1 must be nonnegative")

    def value(self, x: np.ndarray) -> float:
        if self.kind == ZERO:
            return 0.0
        return float(self.lambda1 * np.abs(x).sum())


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    terms: Tuple[SmoothTerm, ...]
    reg: Regularizer = field(default_factory=Regularizer)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) < 1:
            raise InvalidParameterError("a composite problem needs at least one smooth term")
        dims = {term.dim for term in self.terms}
        if len(dims) != 1:
            raise DimensionMismatchError(f"all smooth terms must share one dimension, got {sorted(dims)}")

    @property
    def M(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return self.terms[0].dim

    @property
    def mus(self) -> np.ndarray:
        return np.array([term.mu for term in self.terms])

    @property
    def Ls(self) -> np.ndarray:
        return np.array([term.L for term in self.terms])


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def _power_lambda_max(features: sparse.csr_matrix) -> float:
    """Largest eigenvalue of A^T A by power iteration, not yet inflated"""
    n = features.shape[1]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(POWER_MAX_ITERS):
        w = features.T @ (features @ v)
        rayleigh = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if estimate > 0 and abs(rayleigh - estimate) <= POWER_REL_TOL * estimate:
            estimate = rayleigh
            break
        estimate = rayleigh
    return estimate


def _constants_from_data(kind, hessian=None, features=None, lambda2=0.0) -> Tuple[float, float]:
    if kind == QUADRATIC:
        if hessian is None or hessian.size == 0:
            raise InvalidParameterError("quadratic term has no Hessian data")
        eigenvalues = np.linalg.eigvalsh(hessian)
        return max(float(eigenvalues[0]), 0.0), float(eigenvalues[-1])
    if features is None or features.shape[0] == 0 or features.shape[1] == 0:
        raise InvalidParameterError("logistic term has no examples")
    lam_max = _power_lambda_max(features) * POWER_INFLATION
    return float(lambda2), float(lambda2 + lam_max / 4.0)


def estimate_constants(term: SmoothTerm) -> Tuple[float, float]:
    """
    Recompute (mu, L) from the term's data.

    Quadratic terms get exact extreme eigenvalues of H. Logistic terms get
    mu = lambda2 and L = lambda2 + lambda_max(A^T A) / 4, where lambda_max comes
    from power iteration and is inflated by 1% so L stays an upper bound.
    """
    return _constants_from_data(term.kind, term.hessian, term.features, term.lambda2)


def quadratic_term(hessian, center, mu: Optional[float] = None, L: Optional[float] = None) -> SmoothTerm:
    hessian = np.atleast_2d(np.asarray(hessian, dtype=float))
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if hessian.shape != (center.shape[0], center.shape[0]):
        raise DimensionMismatchError(
            f"Hessian shape {hessian.shape} does not match center dimension {center.shape[0]}"
        )
    if not np.allclose(hessian, hessian.T):
        raise InvalidParameterError("quadratic Hessian must be symmetric")
    if mu is None or L is None:
        est_mu, est_L = _constants_from_data(QUADRATIC, hessian=hessian)
        mu = est_mu if mu is None else mu
        L = est_L if L is None else L
    return SmoothTerm(
        kind=QUADRATIC,
        dim=center.shape[0],
        mu=float(mu),
        L=float(L),
        hessian=_frozen(hessian),
        center=_frozen(center),
    )


def logistic_term(features, labels, lambda2: float = 0.0) -> SmoothTerm:
    features = sparse.csr_matrix(features, dtype=float, copy=True)
    labels = np.asarray(labels, dtype=float).ravel()
    if features.shape[0] != labels.shape[0]:
        raise DimensionMismatchError(
            f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
        )
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InvalidParameterError("logistic labels must be -1 or +1")
    if lambda2 < 0:
        raise InvalidParameterError("lambda2 must be nonnegative")
    mu, L = _constants_from_data(LOGISTIC, features=features, lambda2=lambda2)
    return SmoothTerm(
        kind=LOGISTIC,
        dim=features.shape[1],
        mu=mu,
        L=L,
        features=features,
        labels=_frozen(labels),
        lambda2=float(lambda2),
    )


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def _softplus(t: np.ndarray) -> np.ndarray:
    # log(1 + exp(t)), computed as t + log(1 + exp(-t)) for t > 0
    return np.logaddexp(0.0, t)


def smooth_value(term: SmoothTerm, x) -> float:
    x = _as_vector(x, term.dim)
    if term.kind == QUADRATIC:
        d = x - term.center
        return float(0.5 * d @ (term.hessian @ d))
    margins = term.labels * (term.features @ x)
    return float(_softplus(-margins).sum() + 0.5 * term.lambda2 * (x @ x))


def grad_smooth(term: SmoothTerm, x) -> np.ndarray:
    """Exact gradient of one smooth term"""
    x = _as_vector(x, term.dim)
    if term.kind == QUADRATIC:
        return term.hessian @ (x - term.center)
    margins = term.labels * (term.features @ x)
    coef = -term.labels * expit(-margins)
    return np.asarray(term.features.T @ coef).ravel() + term.lambda2 * x


def full_gradient(problem: CompositeProblem, x) -> np.ndarray:
    """grad f(x) with f = (1/M) * sum_i f_i"""
    x = _as_vector(x, problem.dim)
    total = np.zeros(problem.dim)
    for term in problem.terms:
        total += grad_smooth(term, x)
    return total / problem.M


def evaluate(problem: CompositeProblem, x) -> float:
    x = _as_vector(x, problem.dim)
    smooth = sum(smooth_value(term, x) for term in problem.terms) / problem.M
    return float(smooth + problem.reg.value(x))


def prox_reg(reg: Regularizer, v, step: float) -> np.ndarray:
    """argmin_z g(z) + ||z - v||^2 / (2 * step)"""
    if not step > 0:
        raise InvalidParameterError(f"prox step must be positive, got {step}")
    v = np.asarray(v, dtype=float)
    if reg.kind == ZERO:
        return v.copy()
    threshold = step * reg.lambda1
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def min_norm_subgradient(problem: CompositeProblem, x) -> np.ndarray:
    """
    Minimum-norm element of the subdifferential of F at x.

    For the l1 regularizer the subdifferential is separable: a nonzero x_j
    fixes the sign term, while x_j = 0 lets the sign term absorb up to
    lambda1 of the smooth gradient.
    """
    x = _as_vector(x, problem.dim)
    grad = full_gradient(problem, x)
    reg = problem.reg
    if reg.kind == ZERO or reg.lambda1 == 0:
        return grad
    lam = reg.lambda1
    shrunk = np.sign(grad) * np.maximum(np.abs(grad) - lam, 0.0)
    return np.where(x != 0, grad + lam * np.sign(x), shrunk)


def residual_norm(problem: CompositeProblem, x) -> float:
    return float(np.linalg.norm(min_norm_subgradient(problem, x)))

