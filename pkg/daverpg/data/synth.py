"""
Reproducible synthetic problems and problems built from LIBSVM datasets.
"""
import hashlib
import logging
from typing import Optional

import numpy as np
from scipy import sparse

from ..errors import InvalidParameterError
from ..problem import L1, QUADRATIC, ZERO, CompositeProblem, Regularizer, logistic_term, quadratic_term
from .libsvm import LibSVMDataset, partition

logger = logging.getLogger(__name__)

QUADRATIC_SUM = "quadratic-sum"
LOGISTIC_SYNTHETIC = "logistic-synthetic"
LIBSVM = "libsvm"
PROBLEM_SOURCES = (QUADRATIC_SUM, LOGISTIC_SYNTHETIC, LIBSVM)


def _regularizer(lambda1: float) -> Regularizer:
    return Regularizer(kind=L1, lambda1=lambda1) if lambda1 > 0 else Regularizer(kind=ZERO)


def _quadratic_sum(M, dim, condition, center_spread, lambda1, rng) -> CompositeProblem:
    terms = []
    for _ in range(M):
        if condition == 1.0:
            hessian = np.eye(dim)
        else:
            q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            eigenvalues = rng.uniform(1.0, condition, size=dim)
            eigenvalues[0] = 1.0
            if dim > 1:
                eigenvalues[-1] = condition
            hessian = (q * eigenvalues) @ q.T
            hessian = 0.5 * (hessian + hessian.T)
        center = rng.normal(scale=center_spread, size=dim)
        # spectrum fixed by construction: mu = 1, L = condition
        terms.append(quadratic_term(hessian, center, mu=1.0, L=float(condition if dim > 1 else 1.0)))
    return CompositeProblem(terms=terms, reg=_regularizer(lambda1))


def _logistic_synthetic(M, dim, n_examples, density, lambda1, lambda2, rng) -> CompositeProblem:
    if n_examples < M:
        raise InvalidParameterError(f"need at least one example per worker, got {n_examples} for M={M}")
    features = sparse.random(n_examples, dim, density=density, format="csr", random_state=rng,
                             data_rvs=rng.standard_normal)
    weights = rng.standard_normal(dim) * (rng.uniform(size=dim) < 0.3)
    margins = features @ weights + 0.1 * rng.standard_normal(n_examples)
    labels = np.where(margins >= 0, 1.0, -1.0)
    dataset = LibSVMDataset(features=features, labels=labels)
    return problem_from_dataset(dataset, M, lambda1=lambda1, lambda2=lambda2)


def synth_problem(
    kind: str,
    M: int,
    dim: int,
    seed: int = 0,
    condition: float = 2.0,
    center_spread: float = 5.0,
    n_examples: int = 500,
    density: float = 0.1,
    lambda1: float = 0.0,
    lambda2: float = 0.0,
) -> CompositeProblem:
    """
    quadratic-sum: M quadratics whose Hessians have spectrum in [1, condition]
        (identity when condition = 1) and normally spread centers
    logistic-synthetic: n_examples sparse examples labelled by a sparse linear
        model, split contiguously over M workers
    """
    if M < 1 or dim < 1:
        raise InvalidParameterError("M and dim must be positive")
    if lambda1 < 0 or lambda2 < 0:
        raise InvalidParameterError("regularization weights must be nonnegative")
    rng = np.random.default_rng(seed)
    if kind == QUADRATIC_SUM:
        if condition < 1:
            raise InvalidParameterError("condition number must be >= 1")
        return _quadratic_sum(M, dim, float(condition), center_spread, lambda1, rng)
    if kind == LOGISTIC_SYNTHETIC:
        if not 0 < density <= 1:
            raise InvalidParameterError("density must lie in (0, 1]")
        return _logistic_synthetic(M, dim, n_examples, density, lambda1, lambda2, rng)
    raise InvalidParameterError(f"unknown synthetic problem kind: {kind!r}")


def problem_from_dataset(dataset: LibSVMDataset, M: int, lambda1: float = 0.0, lambda2: float = 0.0) -> CompositeProblem:
    """l1/l2-regularized logistic regression with examples split evenly over M workers"""
    shards = partition(dataset, M)
    terms = [logistic_term(shard.features, shard.labels, lambda2=lambda2) for shard in shards]
    logger.info(f"Built logistic problem: {dataset.n_examples} examples, {dataset.n_features} features, M={M}")
    return CompositeProblem(terms=terms, reg=_regularizer(lambda1))


def problem_digest(problem: CompositeProblem, length: Optional[int] = None) -> str:
    """sha256 over every term's data and the regularizer"""
    digest = hashlib.sha256()
    for term in problem.terms:
        digest.update(f"{term.kind}:{term.dim}:{term.mu!r}:{term.L!r}:{term.lambda2!r}".encode("utf-8"))
        if term.kind == QUADRATIC:
            digest.update(np.ascontiguousarray(term.hessian).tobytes())
            digest.update(np.ascontiguousarray(term.center).tobytes())
        else:
            features = term.features
            for array in (features.data, features.indices, features.indptr, term.labels):
                digest.update(np.ascontiguousarray(array).tobytes())
    digest.update(f"{problem.reg.kind}:{problem.reg.lambda1!r}".encode("utf-8"))
    hexdigest = digest.hexdigest()
    return hexdigest[:length] if length else hexdigest
