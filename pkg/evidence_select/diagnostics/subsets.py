"""Search for disjoint sufficient subsets of a fixed size."""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import coverage, pipeline, predictor, rng
from ..constants import DEFAULT_SEED, DROP_TOLERANCE, SUBSET_POLICIES
from ..errors import ContractError
from ..model import ModelState
from ..synthbag import Bag
from .baselines import top_k

UNION_SIZES = (1, 2, 3)


@dataclass
class SubsetSearchResult:
    """Accepted subsets of one bag in discovery order, plus the probability
    drops of keeping the first candidate and removing the union of the first j."""
    bag_id: str
    subsets: List[List[int]]
    keep_only_drop: Optional[float]
    remove_union_drops: Dict[int, Optional[float]] = field(default_factory=dict)


@dataclass
class MinimalSubsetReport:
    policy: str
    k: int
    bags: int
    subsets_per_bag: float
    at_least_two: float
    at_least_three: float
    keep_only_drop: Optional[float]
    remove_union_drops: Dict[int, Optional[float]]

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["remove_union_drops"] = {f"remove_union_{j}": v for j, v in self.remove_union_drops.items()}
        return data


def _rank(policy: str, state: ModelState, bag: Bag, pool: List[int], k: int, cls: int,
          attention: np.ndarray, responses: Optional[np.ndarray], seed: int, step: int) -> List[int]:
    if policy == "sufficient_prefix":
        return coverage.greedy_max(responses, state.weights.row(cls), k, candidates=pool)
    if policy == "attention_topk":
        picks = top_k(attention[pool], k)
        return [pool[i] for i in picks]
    gen = rng.stream(seed, rng.SEARCH, bag.id, step)
    return [int(i) for i in gen.permutation(np.asarray(pool))[:k]]


def minimal_subset_search(state: ModelState, bag: Bag, k: int, policy: str,
                          drop_tol: float = DROP_TOLERANCE, seed: int = DEFAULT_SEED) -> SubsetSearchResult:
    """Repeatedly take the policy's top-k from the remaining pool as a candidate;
    accept it when the full-bag class is kept and its probability drops by at
    most ``drop_tol``, then remove it from the pool. Stops at the first
    rejection or when fewer than k patches remain.

    Raises:
        ContractError: For an unknown policy or k < 1
    """
    if policy not in SUBSET_POLICIES:
        raise ContractError(f"unknown search policy {policy!r}")
    if k < 1:
        raise ContractError("subset size must be >= 1")
    params = state.predictor
    full = predictor.forward(params, bag)
    cls = int(np.argmax(full.probs))
    base = float(full.probs[cls])
    responses = pipeline.responses(state, bag) if policy == "sufficient_prefix" else None

    pool = list(range(bag.num_patches))
    subsets: List[List[int]] = []
    keep_only_drop: Optional[float] = None
    step = 0
    while k <= len(pool):
        candidate = _rank(policy, state, bag, pool, k, cls, full.attention, responses, seed, step)
        probs, kept_class = predictor.predict_subset(params, bag, candidate, state.mode)
        drop = base - float(probs[cls])
        if keep_only_drop is None:
            keep_only_drop = drop
        if kept_class != cls or drop > drop_tol:
            break
        subsets.append(sorted(candidate))
        taken = set(candidate)
        pool = [i for i in pool if i not in taken]
        step += 1

    union_drops: Dict[int, Optional[float]] = {}
    for j in UNION_SIZES:
        union = set().union(*subsets[:j]) if len(subsets) >= j else None
        rest = [i for i in range(bag.num_patches) if union is not None and i not in union]
        if not rest:
            union_drops[j] = None
            continue
        probs, _ = predictor.predict_subset(params, bag, rest, state.mode)
        union_drops[j] = base - float(probs[cls])
    return SubsetSearchResult(bag.id, subsets, keep_only_drop, union_drops)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def summarize_search(results: Sequence[SubsetSearchResult], policy: str, k: int) -> MinimalSubsetReport:
    counts = [len(r.subsets) for r in results]
    n = len(results)
    return MinimalSubsetReport(
        policy=policy,
        k=k,
        bags=n,
        subsets_per_bag=float(np.mean(counts)) if n else 0.0,
        at_least_two=sum(c >= 2 for c in counts) / n if n else 0.0,
        at_least_three=sum(c >= 3 for c in counts) / n if n else 0.0,
        keep_only_drop=_mean([r.keep_only_drop for r in results]),
        remove_union_drops={j: _mean([r.remove_union_drops.get(j) for r in results]) for j in UNION_SIZES},
    )


def minimal_subset_table(state: ModelState, bags: Sequence[Bag], sizes: Sequence[int],
                         policies: Sequence[str] = SUBSET_POLICIES, drop_tol: float = DROP_TOLERANCE,
                         seed: int = DEFAULT_SEED, threads: int = 1) -> List[MinimalSubsetReport]:
    """Aggregate search statistics for every (k, policy) pair."""
    table = []
    for k in sizes:
        for policy in policies:
            results = pipeline.map_bags(
                lambda bag: minimal_subset_search(state, bag, k, policy, drop_tol, seed), bags, threads
            )
            table.append(summarize_search(results, policy, k))
    return table
