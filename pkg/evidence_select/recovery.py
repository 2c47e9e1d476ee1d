"""Threshold-plus-repair recovery of a discrete evidence subset from gates."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import coverage, predictor
from .constants import COVERAGE_TARGET, RECOVERY_THRESHOLD
from .errors import ConfigError, ContractError
from .predictor import PredictorParams


logger = logging.getLogger(__name__)

THRESHOLDED = "thresholded"
FALLBACK = "fallback"
REPAIRED = "repaired"


@dataclass
class RecoveryConfig:
    """Threshold tau, coverage target c and the cap on repair additions."""
    threshold: float = RECOVERY_THRESHOLD
    coverage_target: float = COVERAGE_TARGET
    max_add: Optional[int] = None
    repair: bool = True

    def validate(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("must lie in (0, 1)", "recovery.threshold")
        if not 0.0 < self.coverage_target <= 1.0:
            raise ConfigError("must lie in (0, 1]", "recovery.coverage_target")
        if self.max_add is not None and self.max_add < 0:
            raise ConfigError("must be >= 0", "recovery.max_add")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvidenceSubset:
    """Recovered indices with the way each one entered the subset.

    ``history`` holds the minimum anchor coverage after thresholding and after
    every repair addition; ``gains`` the marginal of each repaired pick.
    """
    indices: List[int]
    provenance: List[str]
    coverage: float
    saturated: bool = False
    history: List[float] = field(default_factory=list)
    gains: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def repaired(self) -> List[int]:
        return [i for i, p in zip(self.indices, self.provenance) if p == REPAIRED]

    def to_record(self, bag_id: str) -> Dict:
        return {
            "bag_id": bag_id,
            "indices": [int(i) for i in self.indices],
            "provenance": list(self.provenance),
            "coverage": float(self.coverage),
            "saturated": bool(self.saturated),
        }


def min_coverage(selected: np.ndarray, R: np.ndarray) -> float:
    """Smallest anchor coverage; 1.0 when there are no anchors."""
    if R.shape[1] == 0:
        return 1.0
    return float(coverage.coverage(selected, R).min())


def recover(pi, R, alpha, cfg: Optional[RecoveryConfig] = None) -> EvidenceSubset:
    """Convert continuous gates into a discrete evidence subset.

    Args:
        pi: Gates (N,)
        R: Anchor responses (N, M)
        alpha: Class-anchor weights of the predicted class (M,)
        cfg: Recovery settings

    Returns:
        EvidenceSubset; ``saturated`` is set when repair stopped before every
        anchor reached the coverage target

    Raises:
        ContractError: On an empty bag or mismatched shapes
    """
    cfg = cfg or RecoveryConfig()
    pi = np.asarray(pi, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    n = pi.shape[0]
    if n == 0:
        raise ContractError("cannot recover evidence from an empty bag")
    if R.shape[0] != n:
        raise ContractError(f"responses have {R.shape[0]} rows for {n} gates")

    indices = [int(i) for i in np.flatnonzero(pi > cfg.threshold)]
    provenance = [THRESHOLDED] * len(indices)
    if not indices:
        indices = [int(np.argmax(pi))]
        provenance = [FALLBACK]

    selected = coverage.indicator(indices, n)
    achieved = min_coverage(selected, R)
    history = [achieved]
    gains: List[float] = []
    cap = n if cfg.max_add is None else cfg.max_add
    saturated = False

    while achieved < cfg.coverage_target:
        if not cfg.repair or len(gains) >= cap or len(indices) == n:
            saturated = True
            break
        marg = coverage.marginal(selected, R, alpha)
        marg[selected > 0] = -np.inf
        best = int(np.argmax(marg))
        if marg[best] <= 0.0:
            saturated = True
            break
        indices.append(best)
        provenance.append(REPAIRED)
        gains.append(float(marg[best]))
        selected[best] = 1.0
        achieved = min_coverage(selected, R)
        history.append(achieved)

    if saturated:
        logger.debug("repair stopped at coverage %.4f after %d additions", achieved, len(gains))
    return EvidenceSubset(
        indices=indices,
        provenance=provenance,
        coverage=achieved,
        saturated=saturated,
        history=history,
        gains=gains,
    )


def cd_gap(params: PredictorParams, bag, pi, subset: Sequence[int], mode: str,
           cls: Optional[int] = None) -> float:
    """|Phi(gated forward) - Phi(subset forward)| for the full-bag predicted class.

    ``cls`` defaults to the argmax of the ungated full-bag prediction.
    """
    if cls is None:
        cls = int(np.argmax(predictor.forward(params, bag).probs))
    gated = predictor.forward(params, bag, pi, mode).probs
    kept, _ = predictor.predict_subset(params, bag, subset, mode)
    return float(abs(gated[cls] - kept[cls]))
