"""Retraining experiments: budget sweep, component ablation, grounding variants and the temperature control."""

import dataclasses
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import rng
from ..constants import BUDGET_GRID, EVIDENCE_BUDGET
from ..recovery import RecoveryConfig
from ..synthbag import AnchorBank, Dataset, gram_schmidt
from ..training import TrainConfig, train
from .interventions import Thresholds, summarize_model


logger = logging.getLogger(__name__)

# rung name -> (train overrides, recovery overrides)
ABLATION_LADDER: List[Tuple[str, Dict, Dict]] = [
    ("backbone_only", {"use_selector": False}, {}),
    ("naive_selector", {"lambda_budget": 0.0, "lambda_ground": 0.0}, {"repair": False}),
    ("plus_budget", {"lambda_ground": 0.0}, {"repair": False}),
    ("plus_recovery", {"lambda_ground": 0.0}, {}),
    ("plus_grounding", {"constrained_bridge": False}, {}),
    ("full", {"constrained_bridge": True}, {}),
]

GROUNDING_VARIANTS = [
    "no_grounding",
    "random_anchors",
    "shuffled_anchors",
    "unconstrained_bridge",
    "constrained_bridge",
]


def _run(dataset: Dataset, train_cfg: TrainConfig, recovery_cfg: RecoveryConfig, split: str,
         thresholds: Optional[Thresholds], threads: int) -> Tuple[Dict, List[Dict]]:
    result = train(dataset, train_cfg)
    summary = summarize_model(result.model, dataset.split(split), recovery_cfg, thresholds, threads)
    return summary, result.history


def budget_sweep(dataset: Dataset, train_cfg: TrainConfig, recovery_cfg: Optional[RecoveryConfig] = None,
                 grid: Sequence[float] = BUDGET_GRID, split: str = "test",
                 thresholds: Optional[Thresholds] = None, threads: int = 1,
                 on_row: Optional[Callable[[Dict], None]] = None) -> List[Dict]:
    """Retrain once per budget with the shared seed; one row per budget."""
    recovery_cfg = recovery_cfg or RecoveryConfig()
    rows = []
    for rho in grid:
        logger.info("budget sweep: rho=%.2f", rho)
        cfg = dataclasses.replace(train_cfg, budget=float(rho))
        summary, history = _run(dataset, cfg, recovery_cfg, split, thresholds, threads)
        row = {"rho": float(rho), "operating_point": bool(np.isclose(rho, EVIDENCE_BUDGET))}
        row.update(summary)
        row["max_budget_loss"] = max((h["budget"] for h in history), default=0.0)
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def ablation_suite(dataset: Dataset, train_cfg: TrainConfig, recovery_cfg: Optional[RecoveryConfig] = None,
                   split: str = "test", thresholds: Optional[Thresholds] = None, threads: int = 1,
                   on_row: Optional[Callable[[Dict], None]] = None) -> List[Dict]:
    """Train the component ladder, each rung adding one module, with shared seeds."""
    recovery_cfg = recovery_cfg or RecoveryConfig()
    rows = []
    for name, train_overrides, recovery_overrides in ABLATION_LADDER:
        logger.info("ablation rung: %s", name)
        cfg = dataclasses.replace(train_cfg, **train_overrides)
        rcfg = dataclasses.replace(recovery_cfg, **recovery_overrides)
        summary, _ = _run(dataset, cfg, rcfg, split, thresholds, threads)
        row = {"rung": name}
        row.update(summary)
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def fixed_temperature(train_cfg: TrainConfig, temperature: float = 1.0) -> TrainConfig:
    """Control run: no annealing, gates held at ``temperature`` for every epoch."""
    return dataclasses.replace(train_cfg, anneal=False, temperature_start=temperature,
                               temperature_end=min(train_cfg.temperature_end, temperature))


def temperature_control(dataset: Dataset, train_cfg: TrainConfig, recovery_cfg: Optional[RecoveryConfig] = None,
                        split: str = "test", thresholds: Optional[Thresholds] = None, threads: int = 1,
                        on_row: Optional[Callable[[Dict], None]] = None) -> List[Dict]:
    """Annealed run against the fixed T = 1.0 control on the same seed."""
    recovery_cfg = recovery_cfg or RecoveryConfig()
    runs = [
        ("annealed", dataclasses.replace(train_cfg, anneal=True)),
        ("fixed_temperature", fixed_temperature(train_cfg)),
    ]
    rows = []
    for variant, cfg in runs:
        logger.info("temperature variant: %s", variant)
        summary, history = _run(dataset, cfg, recovery_cfg, split, thresholds, threads)
        row = {"variant": variant, "final_temperature": history[-1]["temperature"] if history else None}
        row.update(summary)
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def random_anchor_bank(bank: AnchorBank, seed: int) -> AnchorBank:
    """Fresh orthonormal directions with the original names."""
    draws = rng.stream(seed, rng.ANCHORS, "random").standard_normal((bank.size, bank.dim))
    return AnchorBank(anchors=gram_schmidt(draws), names=list(bank.names))


def shuffled_anchor_bank(bank: AnchorBank) -> AnchorBank:
    """Anchor rows shifted by one so no anchor keeps its concept."""
    return AnchorBank(anchors=np.roll(bank.anchors, 1, axis=0), names=list(bank.names))


def grounding_variant(dataset: Dataset, train_cfg: TrainConfig, variant: str) -> Tuple[Dataset, TrainConfig]:
    if variant == "no_grounding":
        return dataset, dataclasses.replace(train_cfg, lambda_ground=0.0)
    if variant == "random_anchors":
        return dataclasses.replace(dataset, anchors=random_anchor_bank(dataset.anchors, train_cfg.seed)), train_cfg
    if variant == "shuffled_anchors":
        return dataclasses.replace(dataset, anchors=shuffled_anchor_bank(dataset.anchors)), train_cfg
    if variant == "unconstrained_bridge":
        return dataset, dataclasses.replace(train_cfg, constrained_bridge=False)
    return dataset, dataclasses.replace(train_cfg, constrained_bridge=True)


def grounding_variants(dataset: Dataset, train_cfg: TrainConfig, recovery_cfg: Optional[RecoveryConfig] = None,
                       split: str = "test", thresholds: Optional[Thresholds] = None, threads: int = 1,
                       on_row: Optional[Callable[[Dict], None]] = None) -> List[Dict]:
    """Grounding ablation with the same columns as the component ladder."""
    recovery_cfg = recovery_cfg or RecoveryConfig()
    rows = []
    for variant in GROUNDING_VARIANTS:
        logger.info("grounding variant: %s", variant)
        data, cfg = grounding_variant(dataset, train_cfg, variant)
        summary, _ = _run(data, cfg, recovery_cfg, split, thresholds, threads)
        row = {"variant": variant}
        row.update(summary)
        rows.append(row)
        if on_row:
            on_row(row)
    return rows
