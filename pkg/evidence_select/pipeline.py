"""One-bag inference: gates, anchor responses, predictions and recovered evidence."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from . import grounding, predictor, recovery, selector
from .errors import ContractError
from .model import ModelState
from .recovery import EvidenceSubset, RecoveryConfig
from .selector import GateVector
from .synthbag import Bag

T = TypeVar("T")


@dataclass
class BagInference:
    """Everything the diagnostics need about one bag under a model."""
    bag_id: str
    full_probs: np.ndarray  # ungated host on the full bag
    predicted: int  # frozen full-bag class c*
    gates: Optional[GateVector] = None
    responses: Optional[np.ndarray] = None  # (N, M)
    gated_probs: Optional[np.ndarray] = None

    @property
    def gated_class(self) -> Optional[int]:
        return None if self.gated_probs is None else int(np.argmax(self.gated_probs))


@dataclass
class Explanation:
    inference: BagInference
    evidence: EvidenceSubset
    cd_gap: float


def gate_vector(state: ModelState, bag: Bag, temperature: Optional[float] = None) -> GateVector:
    adapted = grounding.adapt(state.grounding, bag.features)
    gate, _ = selector.gates(state.selector, adapted.E, bag.coords,
                             state.temperature if temperature is None else temperature)
    return gate


def responses(state: ModelState, bag: Bag) -> np.ndarray:
    """Anchor responses r (N, M) through the configured bridge input."""
    H = np.asarray(bag.features, dtype=np.float64)
    adapted = grounding.adapt(state.grounding, H)
    Z = grounding.bridge_source(state.grounding, H, adapted)
    return grounding.anchor_responses(state.grounding, Z, state.anchors).R


def infer(state: ModelState, bag: Bag, temperature: Optional[float] = None) -> BagInference:
    full = predictor.forward(state.predictor, bag).probs
    result = BagInference(bag_id=bag.id, full_probs=full, predicted=int(np.argmax(full)))
    if not state.use_selector:
        return result
    result.gates = gate_vector(state, bag, temperature)
    result.responses = responses(state, bag)
    result.gated_probs = predictor.forward(state.predictor, bag, result.gates.pi, state.mode).probs
    return result


def explain(state: ModelState, bag: Bag, cfg: Optional[RecoveryConfig] = None,
            temperature: Optional[float] = None) -> Explanation:
    """Recover evidence for the full-bag predicted class and measure its C-D gap.

    Raises:
        ContractError: If the model has no selector
    """
    if not state.use_selector:
        raise ContractError("a backbone-only model produces no evidence")
    inference = infer(state, bag, temperature)
    alpha = state.weights.row(inference.predicted)
    evidence = recovery.recover(inference.gates.pi, inference.responses, alpha, cfg)
    kept, _ = predictor.predict_subset(state.predictor, bag, evidence.indices, state.mode)
    c = inference.predicted
    gap = float(abs(inference.gated_probs[c] - kept[c]))
    return Explanation(inference=inference, evidence=evidence, cd_gap=gap)


def map_bags(fn: Callable[[Bag], T], bags: Sequence[Bag], threads: int = 1) -> List[T]:
    """Apply ``fn`` to every bag; results come back in bag order for any thread count."""
    if threads <= 1 or len(bags) < 2:
        return [fn(bag) for bag in bags]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, bags))
