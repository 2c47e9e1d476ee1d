"""Keep-only and remove interventions and the aggregate S/N/R report.

M(.) is Macro-F1 of the predicted class against bag labels after replacing
every bag by the given subset; Phi(.) is the probability of the frozen
full-bag predicted class.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .. import pipeline, predictor
from ..constants import (
    BUDGET_FRACTION,
    NECESSITY_DELTA,
    RECOVERABILITY_DELTA,
    SUFFICIENCY_DELTA,
    UNAVAILABLE,
)
from ..errors import ContractError
from ..metrics import macro_f1
from ..model import ModelState
from ..recovery import RecoveryConfig
from ..synthbag import Bag

Metric = Union[float, str]


def budget_k(num_patches: int, fraction: float = BUDGET_FRACTION) -> int:
    """k = max(1, round(fraction * N)) with halves rounded up."""
    return max(1, int(math.floor(fraction * num_patches + 0.5)))


@dataclass
class SNRRecord:
    """Per-bag intervention outcome; drops are signed probability drops of c*."""
    bag_id: str
    label: int
    predicted: int
    kept_class: int
    removed_class: Optional[int]
    keep_only_drop: float
    evidence_sufficiency: float  # Phi(X_S)
    complement_degradation: Optional[float]
    cd_gap: Optional[float]
    evidence_fraction: float


@dataclass
class Thresholds:
    sufficiency: float = SUFFICIENCY_DELTA
    necessity: float = NECESSITY_DELTA
    recoverability: float = RECOVERABILITY_DELTA


@dataclass
class SNRReport:
    """Split-level S/N/R aggregates; unavailable entries hold the string ``"unavailable"``."""
    bags: int
    full_macro_f1: float
    evidence_sufficiency: float
    keep_only_drop: float
    complement_degradation: Metric
    complement_skipped: int
    cd_gap: Metric
    cd_gap_median: Metric
    evidence_fraction: float
    sufficient_rate: float
    necessary_rate: Metric
    recoverable_rate: Metric
    thresholds: Thresholds = field(default_factory=Thresholds)
    records: List[SNRRecord] = field(default_factory=list, repr=False)

    def to_dict(self, with_records: bool = False) -> Dict:
        data = asdict(self)
        if not with_records:
            data.pop("records")
        return data


def evaluate_subset(state: ModelState, bag: Bag, subset: Sequence[int],
                    gap: Optional[float] = None) -> SNRRecord:
    """Keep-only and remove interventions for one bag."""
    params = state.predictor
    n = bag.num_patches
    chosen = sorted(set(int(i) for i in subset))
    if not chosen:
        raise ContractError(f"bag {bag.id}: evidence subset is empty")
    if chosen[0] < 0 or chosen[-1] >= n:
        raise ContractError(f"bag {bag.id}: evidence index out of range")

    full = predictor.forward(params, bag).probs
    c = int(np.argmax(full))
    kept, kept_class = predictor.predict_subset(params, bag, chosen, state.mode)
    rest = sorted(set(range(n)) - set(chosen))
    removed_drop, removed_class = None, None
    if rest:
        removed, removed_class = predictor.predict_subset(params, bag, rest, state.mode)
        removed_drop = float(full[c] - removed[c])
    return SNRRecord(
        bag_id=bag.id,
        label=bag.label,
        predicted=c,
        kept_class=kept_class,
        removed_class=removed_class,
        keep_only_drop=float(full[c] - kept[c]),
        evidence_sufficiency=float(kept[c]),
        complement_degradation=removed_drop,
        cd_gap=gap,
        evidence_fraction=len(chosen) / n,
    )


def aggregate(records: Sequence[SNRRecord], num_classes: int,
              thresholds: Optional[Thresholds] = None) -> SNRReport:
    """Split-level metrics from per-bag records.

    Complement degradation uses only bags with a non-empty complement, and
    compares against the full-bag metric on those same bags.
    """
    thresholds = thresholds or Thresholds()
    labels = [r.label for r in records]
    full_pred = [r.predicted for r in records]
    kept_pred = [r.kept_class for r in records]
    full_f1 = macro_f1(labels, full_pred, num_classes)
    kept_f1 = macro_f1(labels, kept_pred, num_classes)

    with_rest = [r for r in records if r.removed_class is not None]
    if with_rest:
        rest_labels = [r.label for r in with_rest]
        degradation: Metric = (
            macro_f1(rest_labels, [r.predicted for r in with_rest], num_classes)
            - macro_f1(rest_labels, [r.removed_class for r in with_rest], num_classes)
        )
        necessary: Metric = float(np.mean(
            [r.complement_degradation >= thresholds.necessity for r in with_rest]
        ))
    else:
        degradation = UNAVAILABLE
        necessary = UNAVAILABLE

    gaps = [r.cd_gap for r in records if r.cd_gap is not None]
    return SNRReport(
        bags=len(records),
        full_macro_f1=full_f1,
        evidence_sufficiency=kept_f1,
        keep_only_drop=full_f1 - kept_f1,
        complement_degradation=degradation,
        complement_skipped=len(records) - len(with_rest),
        cd_gap=float(np.mean(gaps)) if gaps else UNAVAILABLE,
        cd_gap_median=float(np.median(gaps)) if gaps else UNAVAILABLE,
        evidence_fraction=float(np.mean([r.evidence_fraction for r in records])) if records else 0.0,
        sufficient_rate=float(np.mean(
            [abs(r.keep_only_drop) <= thresholds.sufficiency for r in records]
        )) if records else 0.0,
        necessary_rate=necessary,
        recoverable_rate=float(np.mean([g <= thresholds.recoverability for g in gaps])) if gaps else UNAVAILABLE,
        thresholds=thresholds,
        records=list(records),
    )


def snr_evaluate(state: ModelState, bags: Sequence[Bag], evidence: Mapping[str, Sequence[int]],
                 gaps: Optional[Mapping[str, float]] = None, thresholds: Optional[Thresholds] = None,
                 threads: int = 1) -> SNRReport:
    """S/N/R report for one evidence subset per bag.

    Args:
        state: Model whose host serves as the fixed evaluator
        bags: Bags of the evaluated split
        evidence: Non-empty index set per bag id
        gaps: Optional C-D gap per bag id
        thresholds: Sufficiency, necessity and recoverability tolerances
        threads: Per-bag evaluation parallelism

    Raises:
        ContractError: If a bag has no evidence entry or an empty one
    """
    gaps = gaps or {}

    def one(bag: Bag) -> SNRRecord:
        if bag.id not in evidence:
            raise ContractError(f"bag {bag.id}: no evidence subset")
        return evaluate_subset(state, bag, evidence[bag.id], gaps.get(bag.id))

    records = pipeline.map_bags(one, bags, threads)
    return aggregate(records, state.num_classes, thresholds)


def explain_split(state: ModelState, bags: Sequence[Bag], recovery_cfg: Optional[RecoveryConfig] = None,
                  threads: int = 1) -> Dict[str, pipeline.Explanation]:
    """Recovered evidence for every bag, keyed by bag id in bag order."""
    explanations = pipeline.map_bags(lambda bag: pipeline.explain(state, bag, recovery_cfg), bags, threads)
    return {bag.id: e for bag, e in zip(bags, explanations)}


GATE_KEYS = ("gate_margin_median", "gate_distance_median", "mean_gate")


def gate_summary(explained: Mapping[str, pipeline.Explanation], threshold: float) -> Dict[str, Metric]:
    """Medians over bags of min_i |pi_i - tau| and ||pi - 1_S||_2, plus the mean gate."""
    if not explained:
        return {key: UNAVAILABLE for key in GATE_KEYS}
    margins, distances, means = [], [], []
    for e in explained.values():
        pi = e.inference.gates.pi
        target = np.zeros_like(pi)
        target[e.evidence.indices] = 1.0
        margins.append(float(np.min(np.abs(pi - threshold))))
        distances.append(float(np.linalg.norm(pi - target)))
        means.append(float(pi.mean()))
    return {
        "gate_margin_median": float(np.median(margins)),
        "gate_distance_median": float(np.median(distances)),
        "mean_gate": float(np.mean(means)),
    }


def summarize_model(state: ModelState, bags: Sequence[Bag], recovery_cfg: Optional[RecoveryConfig] = None,
                    thresholds: Optional[Thresholds] = None, threads: int = 1) -> Dict[str, Metric]:
    """Prediction quality plus recovered-evidence S/N/R for one trained model.

    A backbone-only model reports Macro-F1 and "unavailable" evidence metrics.
    """
    labels = [bag.label for bag in bags]
    if not state.use_selector:
        preds = [pipeline.infer(state, bag).predicted for bag in bags]
        return {
            "macro_f1": macro_f1(labels, preds, state.num_classes),
            "cd_gap": UNAVAILABLE,
            "complement_degradation": UNAVAILABLE,
            "evidence_sufficiency": UNAVAILABLE,
            "keep_only_drop": UNAVAILABLE,
            "evidence_fraction": UNAVAILABLE,
            "cd_gap_median": UNAVAILABLE,
            **{key: UNAVAILABLE for key in GATE_KEYS},
        }
    recovery_cfg = recovery_cfg or RecoveryConfig()
    explained = explain_split(state, bags, recovery_cfg, threads)
    preds = [explained[bag.id].inference.gated_class for bag in bags]
    report = snr_evaluate(
        state, bags,
        {k: e.evidence.indices for k, e in explained.items()},
        {k: e.cd_gap for k, e in explained.items()},
        thresholds, threads,
    )
    return {
        "macro_f1": macro_f1(labels, preds, state.num_classes),
        "cd_gap": report.cd_gap,
        "complement_degradation": report.complement_degradation,
        "evidence_sufficiency": report.evidence_sufficiency,
        "keep_only_drop": report.keep_only_drop,
        "evidence_fraction": report.evidence_fraction,
        "cd_gap_median": report.cd_gap_median,
        **gate_summary(explained, recovery_cfg.threshold),
    }
