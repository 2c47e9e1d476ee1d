"""Budget-matched subset rules and the same-budget comparison table."""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import coverage, pipeline, predictor, rng
from ..constants import BASELINE_RULES, BUDGET_FRACTION, DEFAULT_SEED
from ..errors import ContractError
from ..metrics import macro_f1
from ..model import ModelState
from ..recovery import RecoveryConfig
from ..synthbag import Bag
from .interventions import Thresholds, budget_k, evaluate_subset, aggregate


logger = logging.getLogger(__name__)

GCE_RULES = ("gce_discrete", "gce_soft_threshold")


def top_k(scores: np.ndarray, k: int) -> List[int]:
    """Indices of the k largest scores; ties go to the lowest index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return [int(i) for i in order[:k]]


def occlusion_scores(state: ModelState, bag: Bag, cls: Optional[int] = None) -> np.ndarray:
    """Drop in the class probability when each patch alone is removed."""
    params = state.predictor
    full = predictor.forward(params, bag).probs
    c = int(np.argmax(full)) if cls is None else cls
    n = bag.num_patches
    scores = np.zeros(n)
    if n == 1:
        return scores
    everything = np.arange(n)
    for i in range(n):
        rest, _ = predictor.predict_subset(params, bag, everything[everything != i], state.mode)
        scores[i] = full[c] - rest[c]
    return scores


def gce_discrete_subset(state: ModelState, bag: Bag, k: int,
                        explanation: Optional[pipeline.Explanation] = None,
                        recovery_cfg: Optional[RecoveryConfig] = None) -> List[int]:
    """Recovered subset truncated or extended to exactly k by marginal gain."""
    explanation = explanation or pipeline.explain(state, bag, recovery_cfg)
    recovered = explanation.evidence.indices
    R = explanation.inference.responses
    alpha = state.weights.row(explanation.inference.predicted)
    if len(recovered) >= k:
        return coverage.greedy_max(R, alpha, k, candidates=recovered)
    return list(recovered) + coverage.greedy_max(R, alpha, k - len(recovered), start=recovered)


def baseline_subset(rule: str, state: ModelState, bag: Bag, fraction: float = BUDGET_FRACTION,
                    seed: int = DEFAULT_SEED, explanation: Optional[pipeline.Explanation] = None,
                    recovery_cfg: Optional[RecoveryConfig] = None) -> List[int]:
    """Exactly k = max(1, round(fraction * N)) indices chosen by ``rule``.

    Raises:
        ContractError: For an unknown rule, or a GCE rule on a backbone-only model
    """
    if rule not in BASELINE_RULES:
        raise ContractError(f"unknown subset rule {rule!r}")
    if rule in GCE_RULES and not state.use_selector:
        raise ContractError(f"rule {rule} needs a trained selector")
    n = bag.num_patches
    k = budget_k(n, fraction)
    params = state.predictor

    if rule == "random_k":
        gen = rng.stream(seed, rng.BASELINE, bag.id)
        return [int(i) for i in gen.choice(n, size=k, replace=False)]
    if rule == "attention_topk":
        return top_k(predictor.forward(params, bag).attention, k)
    if rule == "gradient_topk":
        cls = int(np.argmax(predictor.forward(params, bag).probs))
        return top_k(predictor.input_saliency(params, bag, cls), k)
    if rule == "occlusion_topk":
        return top_k(occlusion_scores(state, bag), k)
    if rule == "gce_soft_threshold":
        pi = explanation.inference.gates.pi if explanation else pipeline.gate_vector(state, bag).pi
        return top_k(pi, k)
    return gce_discrete_subset(state, bag, k, explanation, recovery_cfg)


def prediction_gap(state: ModelState, bag: Bag, subset: Sequence[int], rule: str,
                   explanation: Optional[pipeline.Explanation] = None) -> float:
    """C-D gap for GCE rules, full-vs-subset gap of c* for post-hoc rules."""
    params = state.predictor
    full = predictor.forward(params, bag).probs
    c = int(np.argmax(full))
    kept, _ = predictor.predict_subset(params, bag, subset, state.mode)
    if rule in GCE_RULES:
        gated = explanation.inference.gated_probs if explanation else predictor.forward(
            params, bag, pipeline.gate_vector(state, bag).pi, state.mode).probs
        return float(abs(gated[c] - kept[c]))
    return float(abs(full[c] - kept[c]))


def same_budget_table(state: ModelState, bags: Sequence[Bag], rules: Sequence[str] = BASELINE_RULES,
                      fraction: float = BUDGET_FRACTION, seed: int = DEFAULT_SEED,
                      recovery_cfg: Optional[RecoveryConfig] = None,
                      thresholds: Optional[Thresholds] = None, threads: int = 1,
                      explanations: Optional[Dict[str, pipeline.Explanation]] = None) -> List[Dict]:
    """One row per rule at the matched budget: keep-only Macro-F1 and drop,
    complement degradation, prediction gap and evidence fraction."""
    if state.use_selector and explanations is None:
        explanations = {
            bag.id: e for bag, e in zip(bags, pipeline.map_bags(
                lambda b: pipeline.explain(state, b, recovery_cfg), bags, threads))
        }
    rows = []
    for rule in rules:
        if rule in GCE_RULES and not state.use_selector:
            continue

        def one(bag: Bag, rule=rule):
            e = explanations.get(bag.id) if explanations else None
            subset = baseline_subset(rule, state, bag, fraction, seed, e, recovery_cfg)
            return evaluate_subset(state, bag, subset, prediction_gap(state, bag, subset, rule, e))

        report = aggregate(pipeline.map_bags(one, bags, threads), state.num_classes, thresholds)
        rows.append({
            "rule": rule,
            "keep_only_macro_f1": report.evidence_sufficiency,
            "keep_only_drop": report.keep_only_drop,
            "complement_degradation": report.complement_degradation,
            "prediction_gap": report.cd_gap,
            "evidence_fraction": report.evidence_fraction,
        })
        logger.debug("same-budget row %s: %s", rule, rows[-1])
    return rows


def inference_cost(state: ModelState, bags: Sequence[Bag], fraction: float = BUDGET_FRACTION,
                   recovery_cfg: Optional[RecoveryConfig] = None, seed: int = DEFAULT_SEED,
                   threads: int = 1) -> List[Dict]:
    """Patch ratio and Macro-F1 relative to the full bag for each inference mode."""
    labels = [bag.label for bag in bags]
    num_classes = state.num_classes

    def row(mode: str, preds: List[int], ratios: List[float], full_f1: float) -> Dict:
        f1 = macro_f1(labels, preds, num_classes)
        return {
            "mode": mode,
            "patch_ratio": float(np.mean(ratios)) if ratios else 0.0,
            "macro_f1": f1,
            "relative_macro_f1": f1 / full_f1 if full_f1 > 0 else 0.0,
        }

    full_preds = [pipeline.infer(state, bag).predicted for bag in bags]
    full_f1 = macro_f1(labels, full_preds, num_classes)
    rows = [row("full_bag", full_preds, [1.0] * len(bags), full_f1)]

    if state.use_selector:
        explained = pipeline.map_bags(lambda b: pipeline.explain(state, b, recovery_cfg), bags, threads)
        rows.append(row("gce_soft", [e.inference.gated_class for e in explained], [1.0] * len(bags), full_f1))
        preds, ratios = [], []
        for bag, e in zip(bags, explained):
            preds.append(predictor.predict_subset(state.predictor, bag, e.evidence.indices, state.mode)[1])
            ratios.append(len(e.evidence) / bag.num_patches)
        rows.append(row("gce_discrete", preds, ratios, full_f1))

    for rule in ("attention_topk", "occlusion_topk"):
        preds, ratios = [], []
        for bag in bags:
            subset = baseline_subset(rule, state, bag, fraction, seed)
            preds.append(predictor.predict_subset(state.predictor, bag, subset, state.mode)[1])
            ratios.append(len(subset) / bag.num_patches)
        rows.append(row(rule, preds, ratios, full_f1))
    return rows
