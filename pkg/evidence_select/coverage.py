"""Noisy-OR coverage, class utility, marginals, curvature and greedy maximization.

All products prod_i (1 - pi_i r_im) are taken in log1p space. A factor that is
exactly zero (pi_i r_im == 1) is tracked separately so saturated anchors give
exact zeros instead of exp(-inf) arithmetic.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import ContractError, UndefinedCurvatureError


@dataclass
class ClassAnchorWeights:
    """Free weights W_raw (C x M); effective alpha = softplus(W_raw) >= 0."""
    raw: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return softplus(self.raw)

    def row(self, cls: int) -> np.ndarray:
        return softplus(self.raw[cls])

    def arrays(self):
        return {"raw": self.raw}


@dataclass
class CoverageTerms:
    """Coverage v (M,) and leave-one-out products P[i, m] = prod_{j != i} (1 - pi_j r_jm)."""
    v: np.ndarray
    others: np.ndarray


def softplus(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus_grad(x: np.ndarray) -> np.ndarray:
    return sigmoid(x)


def init_weights(num_classes: int, num_concepts: int, concept_classes: Optional[Sequence[int]] = None,
                 on: float = 1.0, off: float = -3.0) -> ClassAnchorWeights:
    """Class-anchor weights; with a concept map, a class starts weighting its own concepts."""
    raw = np.full((num_classes, num_concepts), off if concept_classes is not None else 0.0)
    if concept_classes is not None:
        for m, cls in enumerate(concept_classes):
            raw[cls, m] = on
    return ClassAnchorWeights(raw=raw)


def _check(pi: np.ndarray, R: np.ndarray) -> None:
    if R.ndim != 2 or pi.shape != (R.shape[0],):
        raise ContractError(f"gate shape {pi.shape} does not match responses {R.shape}")


def coverage_terms(pi, R) -> CoverageTerms:
    """Coverage and leave-one-out products in one pass."""
    pi = np.asarray(pi, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    _check(pi, R)
    factors = 1.0 - pi[:, None] * R
    zero = factors <= 0.0
    with np.errstate(divide="ignore"):
        logs = np.where(zero, 0.0, np.log1p(-pi[:, None] * R))
    log_nonzero = logs.sum(axis=0)
    zero_count = zero.sum(axis=0)

    prod_nonzero = np.exp(log_nonzero)
    v = np.where(zero_count > 0, 1.0, -np.expm1(log_nonzero))

    others = np.where(
        zero,
        np.where(zero_count == 1, prod_nonzero, 0.0)[None, :] * np.ones_like(R),
        np.where(zero_count == 0, 1.0, 0.0)[None, :] * np.exp(log_nonzero[None, :] - logs),
    )
    return CoverageTerms(v=v, others=others)


def coverage(pi, R) -> np.ndarray:
    """v_m(pi) = 1 - prod_i (1 - pi_i r_im)."""
    return coverage_terms(pi, R).v


def class_utility(pi, R, alpha) -> float:
    """U_c(pi) = sum_m alpha_cm v_m(pi)."""
    return float(np.dot(np.asarray(alpha, dtype=np.float64), coverage(pi, R)))


def marginal(pi, R, alpha) -> np.ndarray:
    """dU_c/dpi_i = sum_m alpha_cm r_im prod_{j != i} (1 - pi_j r_jm)."""
    terms = coverage_terms(pi, R)
    return (np.asarray(R, dtype=np.float64) * terms.others) @ np.asarray(alpha, dtype=np.float64)


def indicator(subset: Iterable[int], n: int) -> np.ndarray:
    x = np.zeros(n)
    x[list(subset)] = 1.0
    return x


def subset_utility(subset: Iterable[int], R, alpha) -> float:
    """U_c(S) = sum_m alpha_cm [1 - prod_{i in S} (1 - r_im)]."""
    R = np.asarray(R, dtype=np.float64)
    return class_utility(indicator(subset, R.shape[0]), R, alpha)


def gain(i: int, subset: Iterable[int], R, alpha) -> float:
    """Marginal gain U(S + i) - U(S) of adding ``i`` to ``subset``."""
    R = np.asarray(R, dtype=np.float64)
    base = list(subset)
    return subset_utility(base + [i], R, alpha) - subset_utility(base, R, alpha)


def greedy_max(R, alpha, k: int, candidates: Optional[Sequence[int]] = None,
               start: Sequence[int] = ()) -> List[int]:
    """Greedy maximization of U_c under a cardinality budget.

    Args:
        R: Anchor responses (N, M)
        alpha: Class-anchor weights (M,)
        k: Number of picks
        candidates: Optional restriction of the ground set
        start: Indices already selected (contribute coverage, never re-picked)

    Returns:
        Picked indices in selection order; ties go to the lowest index
    """
    R = np.asarray(R, dtype=np.float64)
    n = R.shape[0]
    pool = np.zeros(n, dtype=bool)
    pool[list(range(n)) if candidates is None else list(candidates)] = True
    if k > int(pool.sum()):
        raise ContractError(f"budget {k} exceeds the {int(pool.sum())} available items")
    selected = indicator(start, n)
    pool[list(start)] = False
    picks = []
    for _ in range(k):
        gains = marginal(selected, R, alpha)
        gains[~pool] = -np.inf
        best = int(np.argmax(gains))
        picks.append(best)
        selected[best] = 1.0
        pool[best] = False
    return picks


def curvature(R, alpha) -> float:
    """Total curvature 1 - min_i [U(V) - U(V - i)] / U({i}) over items with U({i}) > 0.

    Raises:
        UndefinedCurvatureError: If every singleton utility is zero
    """
    R = np.asarray(R, dtype=np.float64)
    n = R.shape[0]
    everything = list(range(n))
    full = subset_utility(everything, R, alpha)
    ratios = []
    for i in range(n):
        single = subset_utility([i], R, alpha)
        if single <= 0.0:
            continue
        rest = subset_utility([j for j in everything if j != i], R, alpha)
        ratios.append((full - rest) / single)
    if not ratios:
        raise UndefinedCurvatureError("every item has zero singleton utility")
    return float(min(1.0, max(0.0, 1.0 - min(ratios))))


def curvature_factor(kappa: float) -> float:
    """Greedy guarantee (1 - e^-kappa) / kappa, equal to 1 at kappa = 0."""
    if kappa == 0.0:
        return 1.0
    return float(-np.expm1(-kappa) / kappa)
