"""Numerical audits of the coverage-residual and gate-margin bounds."""

import itertools
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import coverage, pipeline, predictor, recovery, rng
from ..constants import (
    ANCHOR_DELTA,
    ANCHOR_GAMMA,
    DEFAULT_SEED,
    LIPSCHITZ_PROBES,
    RECOVERY_THRESHOLD,
)
from ..errors import ContractError
from ..model import ModelState
from ..recovery import RecoveryConfig
from ..synthbag import Bag, gram_schmidt

TOLERANCE = 1e-12
MAX_ENUMERATED_PATCHES = 10


@dataclass
class AuditBag:
    """Additive instance: h_i = sum_m b_im a_m, g(X_S) = sum_{i in S} w_i h_i."""
    coefficients: np.ndarray  # b (N, M), nonnegative
    weights: np.ndarray  # w (N,), nonnegative
    anchors: np.ndarray  # (M, D) orthonormal
    responses: np.ndarray  # r (N, M)
    alpha: np.ndarray  # (M,), positive

    @property
    def features(self) -> np.ndarray:
        return self.coefficients @ self.anchors

    def representation(self, subset: Sequence[int]) -> np.ndarray:
        idx = list(subset)
        if not idx:
            return np.zeros(self.anchors.shape[1])
        return self.weights[idx] @ self.features[idx]

    def eta(self) -> float:
        """max_m W_m / (alpha_m P_m), P_m the smallest leave-one-out uncovered
        mass over patches expressing anchor m."""
        mass = self.weights @ self.coefficients
        eta = 0.0
        for m in range(self.coefficients.shape[1]):
            if mass[m] <= 0.0:
                continue
            carriers = np.flatnonzero(self.coefficients[:, m] > 0)
            factors = 1.0 - self.responses[:, m]
            least = min(float(np.prod(np.delete(factors, j))) for j in carriers)
            eta = max(eta, mass[m] / (self.alpha[m] * least))
        return eta


@dataclass
class BoundAuditReport:
    checked: int
    violations: int
    max_ratio: float  # largest lhs / rhs over cases with rhs > 0
    lipschitz: List[float] = field(default_factory=list)
    etas: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)


def make_audit_bag(gen: np.random.Generator, num_patches: int, num_anchors: int, dim: int,
                   gamma: float = ANCHOR_GAMMA, delta: float = ANCHOR_DELTA) -> AuditBag:
    anchors = gram_schmidt(gen.standard_normal((num_anchors, dim)))
    b = gen.uniform(0.0, 1.0, (num_patches, num_anchors))
    b[gen.random((num_patches, num_anchors)) < 0.5] = 0.0
    h = b @ anchors
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    cos = (h / norms) @ anchors.T
    return AuditBag(
        coefficients=b,
        weights=gen.uniform(0.0, 1.0, num_patches),
        anchors=anchors,
        responses=1.0 / (1.0 + np.exp(-gamma * (cos - delta))),
        alpha=gen.uniform(0.1, 2.0, num_anchors),
    )


def interventional_bound_audit(num_bags: int = 10, num_patches: int = 8, num_anchors: int = 4,
                               dim: int = 8, num_classes: int = 3,
                               seed: int = DEFAULT_SEED) -> BoundAuditReport:
    """Check ||f(X) - f(X_S)|| <= L_q * eta * sum_m alpha_m (1 - v_m(1_S)) for every
    subset S of every constructed bag, with f a linear head on g.

    Raises:
        ContractError: If exhaustive enumeration would exceed 10 patches
    """
    if num_patches > MAX_ENUMERATED_PATCHES:
        raise ContractError(f"enumeration is limited to {MAX_ENUMERATED_PATCHES} patches")
    gen = rng.stream(seed, rng.PROBE, "interventional")
    checked = violations = 0
    worst = 0.0
    lipschitz, etas = [], []
    for _ in range(num_bags):
        bag = make_audit_bag(gen, num_patches, num_anchors, dim)
        head = gen.standard_normal((num_classes, dim))
        l_q = float(np.linalg.norm(head, 2))
        eta = bag.eta()
        lipschitz.append(l_q)
        etas.append(eta)
        full = head @ bag.representation(range(num_patches))
        for size in range(num_patches + 1):
            for subset in itertools.combinations(range(num_patches), size):
                lhs = float(np.linalg.norm(full - head @ bag.representation(subset)))
                residual = float(bag.alpha @ (1.0 - coverage.coverage(
                    coverage.indicator(subset, num_patches), bag.responses)))
                rhs = l_q * eta * residual
                checked += 1
                if lhs > rhs + TOLERANCE * max(1.0, rhs):
                    violations += 1
                if rhs > 0:
                    worst = max(worst, lhs / rhs)
    return BoundAuditReport(checked=checked, violations=violations, max_ratio=worst,
                            lipschitz=lipschitz, etas=etas)


@dataclass
class RecoverabilityAudit:
    bag_id: str
    lhs: float
    rhs: float
    lipschitz: float
    distance: float
    margin: float
    holds: bool

    def to_dict(self) -> Dict:
        return asdict(self)


def recoverability_bound_audit(state: ModelState, bag: Bag, pi: Optional[np.ndarray] = None,
                               subset: Optional[Sequence[int]] = None, probes: int = LIPSCHITZ_PROBES,
                               seed: int = DEFAULT_SEED, threshold: float = RECOVERY_THRESHOLD,
                               recovery_cfg: Optional[RecoveryConfig] = None) -> RecoverabilityAudit:
    """|F(pi) - F(1_S)| <= L_hat * ||pi - 1_S|| with F the feature-reweighted
    probability of the full-bag class and L_hat the largest gate-gradient norm
    over probes on the segment [pi, 1_S] and uniformly in the cube.

    ``pi`` defaults to the model's gates and ``subset`` to the recovered evidence.
    """
    mode = "feature_reweight"
    params = state.predictor
    cls = int(np.argmax(predictor.forward(params, bag).probs))
    if pi is None:
        pi = pipeline.gate_vector(state, bag).pi
    pi = np.asarray(pi, dtype=np.float64)
    if subset is None:
        R = pipeline.responses(state, bag)
        subset = recovery.recover(pi, R, state.weights.row(cls), recovery_cfg).indices
    target = coverage.indicator(subset, bag.num_patches)

    gen = rng.stream(seed, rng.PROBE, bag.id)
    along = max(2, probes // 2)
    points = [pi + t * (target - pi) for t in np.linspace(0.0, 1.0, along)]
    points.extend(gen.uniform(0.0, 1.0, (probes - along, bag.num_patches)))
    lipschitz = 0.0
    for point in points:
        if not np.any(point > 0):
            continue
        _, grad = predictor.class_prob_gate_grad(params, bag, point, mode, cls)
        lipschitz = max(lipschitz, float(np.linalg.norm(grad)))

    f_pi = predictor.forward(params, bag, pi, mode).probs[cls]
    f_s = predictor.forward(params, bag, target, mode).probs[cls]
    lhs = float(abs(f_pi - f_s))
    distance = float(np.linalg.norm(pi - target))
    rhs = lipschitz * distance
    return RecoverabilityAudit(
        bag_id=bag.id,
        lhs=lhs,
        rhs=rhs,
        lipschitz=lipschitz,
        distance=distance,
        margin=float(np.min(np.abs(pi - threshold))),
        holds=lhs <= rhs + TOLERANCE,
    )


def recoverability_summary(audits: Sequence[RecoverabilityAudit]) -> Dict:
    if not audits:
        return {"bags": 0, "violations": 0}
    return {
        "bags": len(audits),
        "violations": sum(not a.holds for a in audits),
        "median_distance": float(np.median([a.distance for a in audits])),
        "median_margin": float(np.median([a.margin for a in audits])),
        "median_lipschitz": float(np.median([a.lipschitz for a in audits])),
        "max_slack": float(max(a.rhs - a.lhs for a in audits)),
    }
