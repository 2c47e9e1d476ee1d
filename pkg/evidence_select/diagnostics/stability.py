"""Evidence stability across perturbed runs."""

import itertools
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import pipeline, predictor, rng
from ..constants import BUDGET_FRACTION
from ..errors import ContractError
from ..metrics import jaccard
from ..model import ModelState
from ..recovery import RecoveryConfig
from ..synthbag import Bag, Dataset
from ..training import TrainConfig, retrain_selector
from .baselines import GCE_RULES, baseline_subset, prediction_gap


logger = logging.getLogger(__name__)

PERTURBATIONS = ["selector_reinit", "feature_noise"]
NOISE_SCALE = 0.05


@dataclass
class StabilityResult:
    rule: str
    perturbation: str
    runs: int
    jaccard: float
    flip_rate: float
    cd_gap: float

    def to_dict(self) -> Dict:
        return asdict(self)


def perturb_bag(bag: Bag, seed: int, scale: float = NOISE_SCALE) -> Bag:
    """Bag with seeded Gaussian jitter of per-coordinate std ``scale / sqrt(d)``."""
    d = bag.features.shape[1]
    gen = rng.stream(seed, rng.PERTURB, bag.id)
    noise = gen.normal(0.0, scale / np.sqrt(d), bag.features.shape)
    return Bag(
        id=bag.id,
        features=(bag.features.astype(np.float64) + noise).astype(np.float32),
        coords=bag.coords,
        label=bag.label,
        planted=bag.planted,
        split=bag.split,
    )


def _runs(state: ModelState, dataset: Optional[Dataset], bags: Sequence[Bag], seeds: Sequence[int],
          perturbation: str, train_cfg: Optional[TrainConfig], noise_scale: float):
    """(model, bags) per seed."""
    if perturbation == "selector_reinit":
        if dataset is None or train_cfg is None:
            raise ContractError("selector_reinit needs the dataset and a training config")
        cache: Dict[int, ModelState] = {}
        for seed in seeds:
            if seed not in cache:
                logger.info("retraining selector with seed %d", seed)
                cache[seed] = retrain_selector(dataset, state, train_cfg, seed)
            yield cache[seed], list(bags)
    else:
        for seed in seeds:
            yield state, [perturb_bag(bag, seed, noise_scale) for bag in bags]


def stability(state: ModelState, bags: Sequence[Bag], rules: Sequence[str], seeds: Sequence[int],
              perturbation: str = "selector_reinit", dataset: Optional[Dataset] = None,
              train_cfg: Optional[TrainConfig] = None, fraction: float = BUDGET_FRACTION,
              recovery_cfg: Optional[RecoveryConfig] = None, noise_scale: float = NOISE_SCALE,
              threads: int = 1) -> List[StabilityResult]:
    """Mean pairwise Jaccard of evidence sets and the evidence-only prediction
    flip rate, per rule, across runs perturbed with ``seeds``.

    Raises:
        ContractError: With fewer than two seeds or an unknown perturbation
    """
    if len(seeds) < 2:
        raise ContractError("stability needs at least two seeds")
    if perturbation not in PERTURBATIONS:
        raise ContractError(f"unknown perturbation {perturbation!r}")
    rules = [r for r in rules if state.use_selector or r not in GCE_RULES]

    # per rule: per run: (subsets, evidence-only classes, gaps) in bag order
    collected: Dict[str, List] = {rule: [] for rule in rules}
    for seed, (model, run_bags) in zip(seeds, _runs(state, dataset, bags, seeds, perturbation,
                                                    train_cfg, noise_scale)):
        explanations = {}
        if model.use_selector:
            explanations = {
                b.id: e for b, e in zip(run_bags, pipeline.map_bags(
                    lambda b: pipeline.explain(model, b, recovery_cfg), run_bags, threads))
            }
        for rule in rules:
            def one(bag: Bag, rule=rule):
                e = explanations.get(bag.id)
                subset = baseline_subset(rule, model, bag, fraction, seed, e, recovery_cfg)
                _, cls = predictor.predict_subset(model.predictor, bag, subset, model.mode)
                return set(subset), cls, prediction_gap(model, bag, subset, rule, e)
            collected[rule].append(pipeline.map_bags(one, run_bags, threads))

    results = []
    for rule in rules:
        runs = collected[rule]
        scores = []
        for a, b in itertools.combinations(range(len(runs)), 2):
            scores.extend(jaccard(x[0], y[0]) for x, y in zip(runs[a], runs[b]))
        n_bags = len(bags)
        flips = sum(len({run[i][1] for run in runs}) > 1 for i in range(n_bags))
        gaps = [item[2] for run in runs for item in run]
        results.append(StabilityResult(
            rule=rule,
            perturbation=perturbation,
            runs=len(runs),
            jaccard=float(np.mean(scores)) if scores else 1.0,
            flip_rate=flips / n_bags if n_bags else 0.0,
            cd_gap=float(np.mean(gaps)) if gaps else 0.0,
        ))
    return results
